//! Conic descriptions of decision sets `{x : ∃w, Gx x + Gw w - g ∈ K}`.
//!
//! Both the image of a primitive set under a hypothesis and the feasible
//! sets of the true problems are expressed this way, so projection and
//! optimization code is shared between estimated and true losses.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::geometry::{total_dim, Cone, PrimitiveSet};
use crate::hypothesis::HypothesisParams;
use crate::linalg::dot;
use crate::norms::{add_norm_penalty, norm_value, NormKind};
use crate::solver::{solve, ProgramBuilder, Row, SolveOptions, SolveStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionSet {
    pub gx: DMatrix<f64>,
    pub gw: DMatrix<f64>,
    pub g: DVector<f64>,
    pub cones: Vec<Cone>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMin {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub aux: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `x + gamma` is the projected point.
    pub gamma: Vec<f64>,
    /// `||gamma||` in the requested norm.
    pub distance: f64,
    pub aux: Vec<f64>,
}

impl DecisionSet {
    pub fn new(gx: DMatrix<f64>, gw: DMatrix<f64>, g: DVector<f64>, cones: Vec<Cone>) -> Result<Self> {
        let l = g.len();
        if gx.nrows() != l || gw.nrows() != l || total_dim(&cones) != l {
            return Err(CoreError::Dimension(format!(
                "decision set rows disagree: Gx {}, Gw {}, g {l}, cones {}",
                gx.nrows(),
                gw.nrows(),
                total_dim(&cones)
            )));
        }
        Ok(DecisionSet { gx, gw, g, cones })
    }

    /// `{A(s) z + b(s) : z ∈ Z}` with `z` (including lifting columns) as the
    /// auxiliary variables.
    pub fn from_hypothesis(theta: &HypothesisParams, z: &PrimitiveSet, s: &[f64]) -> Result<Self> {
        let a = lifted_map(theta, z, s)?;
        let bs = theta.eval_b(s)?;
        let (n, q) = a.shape();
        let l = z.num_rows();
        let mut gx = DMatrix::zeros(n + l, n);
        let mut gw = DMatrix::zeros(n + l, q);
        let mut g = DVector::zeros(n + l);
        gx.view_mut((0, 0), (n, n)).fill_with_identity();
        gw.view_mut((0, 0), (n, q)).copy_from(&(-a));
        g.rows_mut(0, n).copy_from(&bs);
        gw.view_mut((n, 0), (l, q)).copy_from(&z.h_mat);
        g.rows_mut(n, l).copy_from(&z.h);
        let mut cones = vec![Cone::zero(n)];
        cones.extend(z.cones.iter().copied());
        DecisionSet::new(gx, gw, g, cones)
    }

    pub fn dim(&self) -> usize {
        self.gx.ncols()
    }

    pub fn num_aux(&self) -> usize {
        self.gw.ncols()
    }

    /// Adds fresh auxiliary variables and the membership constraints for
    /// `x = x0 + v[xvars]` (or `x = x0` when `xvars` is `None`).
    pub fn add_membership(&self, b: &mut ProgramBuilder, x0: &[f64], xvars: Option<&[usize]>) -> Range<usize> {
        let aux = b.add_vars(self.num_aux());
        let mut offset = 0;
        for cone in &self.cones {
            let mut rows = Vec::with_capacity(cone.dim);
            for r in offset..offset + cone.dim {
                let mut terms = Vec::new();
                let mut rhs = self.g[r];
                for j in 0..self.dim() {
                    let a = self.gx[(r, j)];
                    if a != 0.0 {
                        rhs -= a * x0[j];
                        if let Some(vars) = xvars {
                            terms.push((vars[j], a));
                        }
                    }
                }
                for (k, w) in aux.clone().enumerate() {
                    let a = self.gw[(r, k)];
                    if a != 0.0 {
                        terms.push((w, a));
                    }
                }
                rows.push(Row::new(terms, rhs));
            }
            b.add_block(*cone, rows);
            offset += cone.dim;
        }
        aux
    }

    /// `min c'x` over the set.
    pub fn minimize(&self, c: &[f64], opts: &SolveOptions) -> Result<LinearMin> {
        let n = self.dim();
        let mut b = ProgramBuilder::new();
        let x = b.add_vars(n);
        for (j, cj) in x.clone().zip(c) {
            b.add_cost(j, *cj);
        }
        let xv: Vec<usize> = x.clone().collect();
        let aux = self.add_membership(&mut b, &vec![0.0; n], Some(&xv));
        let sol = solve(&b.build(), opts)?;
        let xs = sol.primal[x].to_vec();
        let value = match sol.status {
            SolveStatus::Optimal => dot(c, &xs),
            _ => sol.objective_value,
        };
        Ok(LinearMin {
            status: sol.status,
            x: xs,
            aux: sol.primal[aux].to_vec(),
            value,
        })
    }

    /// `min ||gamma||` subject to `x + gamma` in the set.
    pub fn project(&self, x: &[f64], kind: NormKind, opts: &SolveOptions) -> Result<Projection> {
        self.project_impl(x, kind, None, opts)
    }

    /// `min ||gamma||` subject to `x + gamma` in the set and
    /// `c'(x + gamma) <= value`.
    pub fn project_optimal(
        &self,
        x: &[f64],
        c: &[f64],
        value: f64,
        kind: NormKind,
        opts: &SolveOptions,
    ) -> Result<Projection> {
        self.project_impl(x, kind, Some((c, value)), opts)
    }

    fn project_impl(
        &self,
        x: &[f64],
        kind: NormKind,
        level: Option<(&[f64], f64)>,
        opts: &SolveOptions,
    ) -> Result<Projection> {
        let n = self.dim();
        if x.len() != n {
            return Err(CoreError::Dimension(format!(
                "point of length {} for a set in R^{n}",
                x.len()
            )));
        }
        let mut b = ProgramBuilder::new();
        let gamma = b.add_vars(n);
        let gv: Vec<usize> = gamma.clone().collect();
        let aux = self.add_membership(&mut b, x, Some(&gv));
        if let Some((c, value)) = level {
            // value - c'(x + gamma) >= 0, loosened by a hair so that an
            // optimal value computed to solver precision stays attainable.
            let slack = 1e-9 * (1.0 + value.abs());
            let terms = gv.iter().zip(c).map(|(&j, &cj)| (j, -cj)).collect();
            b.add_ge(terms, dot(c, x) - value - slack);
        }
        add_norm_penalty(&mut b, kind, &gv, 1.0);
        let sol = solve(&b.build(), opts)?;
        if sol.status != SolveStatus::Optimal {
            return Err(CoreError::Solver(format!(
                "projection program ended with status {:?}",
                sol.status
            )));
        }
        let g = sol.primal[gamma].to_vec();
        Ok(Projection {
            distance: norm_value(kind, &g),
            gamma: g,
            aux: sol.primal[aux].to_vec(),
        })
    }
}

/// `A(s)` padded with zero columns for the lifting variables of `z`.
pub fn lifted_map(theta: &HypothesisParams, z: &PrimitiveSet, s: &[f64]) -> Result<DMatrix<f64>> {
    let a = theta.eval_a(s)?;
    if a.ncols() != z.dim {
        return Err(CoreError::Dimension(format!(
            "hypothesis has p = {} but the primitive set has dimension {}",
            a.ncols(),
            z.dim
        )));
    }
    if z.num_vars() == z.dim {
        return Ok(a);
    }
    let mut out = DMatrix::zeros(a.nrows(), z.num_vars());
    out.view_mut((0, 0), a.shape()).copy_from(&a);
    Ok(out)
}
