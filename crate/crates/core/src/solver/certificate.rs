use serde::{Deserialize, Serialize};

use super::{ConicProgram, SolveOptions};
use crate::linalg::max_abs;

/// Scaled KKT residuals of a primal-dual pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub primal_residual: f64,
    pub dual_cone_residual: f64,
    pub stationarity_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
}

impl Certificates {
    pub fn pass(&self, opts: &SolveOptions) -> bool {
        self.primal_residual <= opts.feas_tol
            && self.dual_cone_residual <= opts.feas_tol
            && self.stationarity_residual <= opts.feas_tol
            && self.relative_gap <= opts.gap_tol
    }
}

/// Evaluates primal feasibility, dual-cone membership, stationarity and the
/// duality gap of `(v, lambda, bound duals)` directly from the program data,
/// independent of whatever the backend claims.
pub fn check_certificates(
    prog: &ConicProgram,
    v: &[f64],
    duals: &[Vec<f64>],
    bound_duals: &[(f64, f64)],
) -> Certificates {
    let mut primal_viol: f64 = 0.0;
    let mut primal_scale: f64 = 1.0;
    let mut dual_viol: f64 = 0.0;
    let mut dual_scale: f64 = 1.0;
    // grad = Qv + c - A'lambda - lower + upper
    let qv = prog.quad_times(v);
    let mut grad: Vec<f64> = qv.iter().zip(&prog.linear).map(|(a, b)| a + b).collect();
    let mut grad_scale = 1.0f64.max(max_abs(&prog.linear)).max(max_abs(&qv));
    let mut dual_obj = -0.5 * prog.quad_form(v) + prog.offset;

    for (block, lam) in prog.blocks.iter().zip(duals) {
        let resid: Vec<f64> = block.rows.iter().map(|r| r.eval(v)).collect();
        for row in &block.rows {
            primal_scale = primal_scale.max(row.rhs.abs());
        }
        primal_viol = primal_viol.max(block.cone.violation(&resid));
        dual_viol = dual_viol.max(block.cone.dual_violation(lam));
        dual_scale = dual_scale.max(max_abs(lam));
        for (row, &l) in block.rows.iter().zip(lam) {
            dual_obj += row.rhs * l;
            for &(j, a) in &row.terms {
                grad[j] -= a * l;
                grad_scale = grad_scale.max((a * l).abs());
            }
        }
    }
    for (j, (&(lo, hi), &(dl, du))) in prog.var_bounds.iter().zip(bound_duals).enumerate() {
        if lo.is_finite() {
            primal_viol = primal_viol.max(lo - v[j]);
            primal_scale = primal_scale.max(lo.abs());
            dual_viol = dual_viol.max(-dl);
            grad[j] -= dl;
            dual_obj += lo * dl;
        }
        if hi.is_finite() {
            primal_viol = primal_viol.max(v[j] - hi);
            primal_scale = primal_scale.max(hi.abs());
            dual_viol = dual_viol.max(-du);
            grad[j] += du;
            dual_obj -= hi * du;
        }
        dual_scale = dual_scale.max(dl.abs()).max(du.abs());
    }

    let primal_obj = prog.objective(v);
    let gap_scale = 1.0f64.max(primal_obj.abs()).max(dual_obj.abs());
    Certificates {
        primal_residual: primal_viol.max(0.0) / primal_scale,
        dual_cone_residual: dual_viol.max(0.0) / dual_scale,
        stationarity_residual: max_abs(&grad) / grad_scale,
        primal_objective: primal_obj,
        dual_objective: dual_obj,
        relative_gap: (primal_obj - dual_obj).abs() / gap_scale,
    }
}
