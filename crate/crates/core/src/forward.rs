//! The recovered forward problem `min c(s)'x  s.t.  x = A(s) z + b(s), z ∈ Z`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::decision_set::lifted_map;
use crate::error::{CoreError, Result};
use crate::geometry::PrimitiveSet;
use crate::hypothesis::HypothesisParams;
use crate::linalg::dot;
use crate::solver::{solve, ProgramBuilder, Row, SolveOptions, SolveStatus};

/// The known linear objective `c(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObjectiveSpec {
    /// `c(s) = c0 + C s` with `C` given as `n` rows of length `K`.
    Affine { c0: Vec<f64>, c: Vec<Vec<f64>> },
    /// `c(s)_j = s[indices[j]]`: the signal carries the cost vector.
    SignalCoords { indices: Vec<usize> },
}

impl ObjectiveSpec {
    /// Cost equal to the first `n` signal coordinates.
    pub fn leading_signals(n: usize) -> Self {
        ObjectiveSpec::SignalCoords {
            indices: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ObjectiveSpec::Affine { c0, .. } => c0.len(),
            ObjectiveSpec::SignalCoords { indices } => indices.len(),
        }
    }

    pub fn cost(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            ObjectiveSpec::Affine { c0, c } => {
                if c.len() != c0.len() || c.iter().any(|row| row.len() != s.len()) {
                    return Err(CoreError::Dimension(format!(
                        "cost map expects signals of length {}",
                        c.first().map_or(0, Vec::len)
                    )));
                }
                Ok(c0.iter().zip(c).map(|(a, row)| a + dot(row, s)).collect())
            }
            ObjectiveSpec::SignalCoords { indices } => indices
                .iter()
                .map(|&k| {
                    s.get(k).copied().ok_or_else(|| {
                        CoreError::Dimension(format!("cost reads signal {k} of a length-{} signal", s.len()))
                    })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardSolution {
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    /// Full primitive-set point, including lifting variables.
    pub z_star: Vec<f64>,
    pub value: f64,
}

/// Solves the recovered forward problem at signal `s`. Unboundedness and
/// infeasibility come back as statuses.
pub fn solve_forward(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    s: &[f64],
    opts: &SolveOptions,
) -> Result<ForwardSolution> {
    let a = lifted_map(theta, z, s)?;
    let bs = theta.eval_b(s)?;
    let c = obj.cost(s)?;
    if c.len() != a.nrows() {
        return Err(CoreError::Dimension(format!(
            "cost has length {} but decisions have length {}",
            c.len(),
            a.nrows()
        )));
    }
    let cv = DVector::from_column_slice(&c);
    let reduced = a.transpose() * &cv;

    let mut b = ProgramBuilder::new();
    let w = b.add_vars(z.num_vars());
    for (j, r) in w.clone().zip(reduced.iter()) {
        b.add_cost(j, *r);
    }
    b.add_offset(cv.dot(&bs));
    let mut offset = 0;
    for cone in &z.cones {
        let rows = (offset..offset + cone.dim)
            .map(|r| {
                let terms = w
                    .clone()
                    .enumerate()
                    .filter(|&(k, _)| z.h_mat[(r, k)] != 0.0)
                    .map(|(k, j)| (j, z.h_mat[(r, k)]))
                    .collect();
                Row::new(terms, z.h[r])
            })
            .collect();
        b.add_block(*cone, rows);
        offset += cone.dim;
    }
    let sol = solve(&b.build(), opts)?;
    let z_star = sol.primal[w].to_vec();
    let x_star = (&a * DVector::from_column_slice(&z_star) + &bs).as_slice().to_vec();
    let value = match sol.status {
        SolveStatus::Optimal => dot(&c, &x_star),
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        SolveStatus::Infeasible => f64::INFINITY,
        _ => sol.objective_value,
    };
    Ok(ForwardSolution {
        status: sol.status,
        x_star,
        z_star,
        value,
    })
}

/// `J(x, s) = c(s)'x - V(s)`; `+inf` when the recovered problem is unbounded.
pub fn subopt_gap(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    x: &[f64],
    s: &[f64],
    opts: &SolveOptions,
) -> Result<f64> {
    let fwd = solve_forward(theta, z, obj, s, opts)?;
    match fwd.status {
        SolveStatus::Optimal => Ok(dot(&obj.cost(s)?, x) - fwd.value),
        SolveStatus::Unbounded => Ok(f64::INFINITY),
        SolveStatus::Infeasible => Err(CoreError::Infeasible(
            "recovered forward problem has no feasible point".into(),
        )),
        other => Err(CoreError::Solver(format!(
            "forward problem ended with status {other:?}"
        ))),
    }
}
