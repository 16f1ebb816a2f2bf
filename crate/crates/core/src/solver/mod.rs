//! One contract for every continuous subproblem: linear, convex quadratic
//! and second-order cone programs in the form
//!
//! ```text
//! minimize    1/2 v'Qv + c'v + offset
//! subject to  A_j v - b_j ∈ K_j      for every constraint block j
//!             lo <= v <= hi
//! ```
//!
//! Duals follow the Lagrangian `L = f(v) - sum_j lambda_j'(A_j v - b_j)`, so
//! every `lambda_j` lies in the dual cone `K_j*`. Bound duals are reported
//! separately as `(lower, upper)` pairs, both nonnegative.

mod backend;
mod builder;
mod certificate;
mod dump;

use serde::{Deserialize, Serialize};

use crate::geometry::Cone;

pub use backend::solve;
pub use builder::ProgramBuilder;
pub use certificate::{check_certificates, Certificates};
pub use dump::dump_program;

/// One affine row `sum_j a_j v_j - rhs`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row { terms, rhs }
    }

    /// Value of the row at `v`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * v[j]).sum::<f64>() - self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBlock {
    pub cone: Cone,
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub linear: Vec<f64>,
    /// Upper-triangular entries `(i, j, Q_ij)` with `i <= j`; `Q` is symmetric.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub offset: f64,
    pub blocks: Vec<ConstraintBlock>,
    /// Per-variable `(lo, hi)`; infinite ends are absent bounds.
    pub var_bounds: Vec<(f64, f64)>,
}

impl ConicProgram {
    pub fn objective(&self, v: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(v).map(|(c, x)| c * x).sum();
        lin + 0.5 * self.quad_form(v) + self.offset
    }

    /// `v'Qv`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.quadratic
            .iter()
            .map(|&(i, j, q)| if i == j { q * v[i] * v[i] } else { 2.0 * q * v[i] * v[j] })
            .sum()
    }

    /// `Qv`.
    pub fn quad_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars];
        for &(i, j, q) in &self.quadratic {
            out[i] += q * v[j];
            if i != j {
                out[j] += q * v[i];
            }
        }
        out
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Accepted primal and dual residual, relative to the data scale.
    pub feas_tol: f64,
    /// Accepted duality gap, relative to the objective scale.
    pub gap_tol: f64,
    /// Tolerance handed to the interior-point backend.
    pub solver_tol: f64,
    pub max_iters: u32,
    pub deterministic: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-7,
            gap_tol: 1e-6,
            solver_tol: 1e-9,
            max_iters: 500,
            deterministic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    /// One dual vector per constraint block, in block order.
    pub duals: Vec<Vec<f64>>,
    /// `(lower, upper)` bound multipliers per variable.
    pub bound_duals: Vec<(f64, f64)>,
    pub iterations: u32,
    pub certificates: Option<Certificates>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
