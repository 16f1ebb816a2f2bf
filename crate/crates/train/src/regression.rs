//! Linear regression policy `x(s) = b_0 + sum_k s_k b_k`, the decision rule
//! obtained by learning a quadratic cost with unknown constraints.
//!
//! The fit is stored as a hypothesis with `A = 0` over the one-point simplex
//! so it is scored by the same evaluation as every other trainer.

use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::geometry::{make_primitive, PrimitiveKind, PrimitiveParams, PrimitiveSet};
use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::{CoreError, Result};
use nalgebra::{DMatrix, DVector};

use crate::config::{Termination, TrainReport};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFit {
    pub theta: HypothesisParams,
    /// Mean over points of `||x_i - x(s_i)||^2`.
    pub mse: f64,
    pub rank: usize,
    /// True when the features `[1, s]` are rank deficient and the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

/// The one-point primitive set `{1}` matching the regression hypothesis.
pub fn regression_primitive() -> PrimitiveSet {
    make_primitive(PrimitiveKind::Simplex, 1, &PrimitiveParams::default()).expect("dimension 1 is valid")
}

pub fn fit_regression(data: &IODataset) -> Result<RegressionFit> {
    if data.is_empty() {
        return Err(CoreError::InvalidParameter(
            "regression needs at least one observation".into(),
        ));
    }
    let (big_n, n, k) = (data.len(), data.n(), data.k());
    let phi = DMatrix::from_fn(big_n, k + 1, |i, j| if j == 0 { 1.0 } else { data.signals[i][j - 1] });
    let x = DMatrix::from_fn(big_n, n, |i, r| data.decisions[i][r]);
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (big_n.max(k + 1) as f64) * f64::EPSILON;
    let rank = svd.rank(eps);
    let w = svd
        .solve(&x, eps)
        .map_err(|e| CoreError::Solver(format!("least squares failed: {e}")))?;
    let resid = &phi * &w - &x;
    let mse = resid.norm_squared() / big_n as f64;
    let b: Vec<DVector<f64>> = (0..=k).map(|j| w.row(j).transpose()).collect();
    let a = vec![DMatrix::zeros(n, 1); k + 1];
    let mut theta = HypothesisParams::new(a, b)?;
    theta.a_trainable = vec![false; k + 1];
    Ok(RegressionFit {
        theta,
        mse,
        rank,
        rank_deficient: rank < k + 1,
    })
}

pub fn regression_report(fit: &RegressionFit, started: Instant) -> TrainReport {
    let mut notes = vec![format!("feature rank {}", fit.rank)];
    if fit.rank_deficient {
        notes.push("rank deficient: minimum-norm solution".into());
    }
    TrainReport {
        algorithm: "regression".into(),
        initial_objective: fit.mse,
        trajectory: Vec::new(),
        theta: fit.theta.clone(),
        final_loss: fit.mse,
        final_slack1: 0.0,
        final_slack2: 0.0,
        termination: Termination::Exact,
        wall_time_s: started.elapsed().as_secs_f64(),
        mip_gap: None,
        notes,
    }
}
