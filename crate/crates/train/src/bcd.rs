//! Block-coordinate descent: exact inner solves in `b` and the per-point
//! variables, gradient steps in `A` with Armijo backtracking, and the
//! adaptive smoothing schedule.

use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::PrimitiveSet;
use invfeas_core::hypothesis::{HypothesisParams, Structure};
use invfeas_core::norms::{NormKind, PairNorm};
use invfeas_core::{CoreError, Result};
use nalgebra::DMatrix;

use crate::config::{IterationRecord, Termination, TrainConfig, TrainReport};
use crate::inner::{frobenius_sq, gradient_a, solve_inner, InnerSolution, InnerSpec};

/// Objective at or below this counts as an exact fit.
const ZERO_LOSS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ArmijoOutcome {
    pub theta: HypothesisParams,
    pub inner: InnerSolution,
    pub step: f64,
    pub accepted: bool,
    pub backtracks: u32,
}

fn stepped(theta: &HypothesisParams, grads: &[DMatrix<f64>], eta: f64) -> Result<HypothesisParams> {
    let a = theta.a.iter().zip(grads).map(|(a, g)| a - g * eta).collect();
    theta.with_a(a)
}

/// Backtracking along `-G` until `f(A - eta G) <= f(A) - c eta ||G||^2`.
/// The trial inner solution of an accepted step is returned for reuse.
#[allow(clippy::too_many_arguments)]
pub fn armijo_step(
    theta: &HypothesisParams,
    current: &InnerSolution,
    grads: &[DMatrix<f64>],
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    data: &IODataset,
    spec: &InnerSpec,
    cfg: &TrainConfig,
) -> Result<ArmijoOutcome> {
    let g2 = frobenius_sq(grads);
    if g2 == 0.0 {
        return Ok(ArmijoOutcome {
            theta: theta.clone(),
            inner: current.clone(),
            step: 0.0,
            accepted: true,
            backtracks: 0,
        });
    }
    let mut eta = cfg.armijo.initial_step;
    for bt in 0..=cfg.armijo.max_backtracks {
        let trial = stepped(theta, grads, eta)?;
        let inner = solve_inner(&trial, z, obj, data, spec)?;
        if inner.is_optimal() && inner.objective <= current.objective - cfg.armijo.c * eta * g2 {
            return Ok(ArmijoOutcome {
                theta: trial,
                inner,
                step: eta,
                accepted: true,
                backtracks: bt,
            });
        }
        eta *= cfg.armijo.shrink;
    }
    Ok(ArmijoOutcome {
        theta: theta.clone(),
        inner: current.clone(),
        step: 0.0,
        accepted: false,
        backtracks: cfg.armijo.max_backtracks,
    })
}

fn check_trainable(theta: &HypothesisParams) -> Result<()> {
    if theta.structure != Structure::Free {
        return Err(CoreError::InvalidParameter(
            "gradient training needs a free hypothesis; structured ones have exact trainers".into(),
        ));
    }
    Ok(())
}

fn with_b(theta: &HypothesisParams, inner: &InnerSolution) -> Result<HypothesisParams> {
    if inner.b.is_empty() {
        return Ok(theta.clone());
    }
    theta.with_b(inner.b.clone())
}

/// Algorithm 1: descent on the unsmoothed inner optimal value.
pub fn train_vanilla(
    data: &IODataset,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    cfg: &TrainConfig,
    theta0: &HypothesisParams,
) -> Result<TrainReport> {
    if cfg.smoothing.enabled {
        return Err(CoreError::InvalidParameter(
            "the vanilla trainer runs without smoothing".into(),
        ));
    }
    run(data, z, obj, cfg, theta0, "bcd_vanilla")
}

/// Algorithm 2: descent on the smoothed inner value with `eps1`, `eps2`
/// doubling whenever their slack stops moving.
pub fn train_smoothed(
    data: &IODataset,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    cfg: &TrainConfig,
    theta0: &HypothesisParams,
) -> Result<TrainReport> {
    if !cfg.smoothing.enabled {
        return Err(CoreError::InvalidParameter(
            "the smoothed trainer needs smoothing enabled".into(),
        ));
    }
    run(data, z, obj, cfg, theta0, "bcd_smoothed")
}

fn sq_sums(inner: &InnerSolution) -> (f64, f64) {
    inner.slack_sums(NormKind::L2Squared)
}

fn run(
    data: &IODataset,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    cfg: &TrainConfig,
    theta0: &HypothesisParams,
    name: &str,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_trainable(theta0)?;
    let started = Instant::now();
    let sm = &cfg.smoothing;
    let mut eps = sm.enabled.then_some((sm.eps1, sm.eps2));
    let mut spec = InnerSpec::from_config(cfg, eps);
    let mut theta = theta0.clone();
    let mut cur = solve_inner(&theta, z, obj, data, &spec)?;
    if !cur.is_optimal() {
        return Err(CoreError::Infeasible(format!(
            "the inner program at the initial hypothesis is {:?}; start from another \
             hypothesis or use the smoothed trainer",
            cur.status
        )));
    }
    theta = with_b(&theta, &cur)?;
    let initial_objective = cur.objective;
    let mut trajectory = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut stall = 0usize;
    let mut prev_sq = sq_sums(&cur);

    for t in 1..=cfg.max_iters {
        let it_start = Instant::now();
        if cur.objective <= ZERO_LOSS {
            termination = Termination::ZeroLoss;
            break;
        }
        let grads = gradient_a(&theta, &cur, data, obj)?;
        let out = armijo_step(&theta, &cur, &grads, z, obj, data, &spec, cfg)?;
        let before = cur.objective;
        let used_eps = eps;
        theta = with_b(&out.theta, &out.inner)?;
        cur = out.inner;
        let (slack1, slack2) = cur.slack_sums(NormKind::L2);
        let mut record = IterationRecord {
            iter: t,
            objective: cur.objective,
            loss: cur.loss,
            eps1: used_eps.map_or(0.0, |e| e.0),
            eps2: used_eps.map_or(0.0, |e| e.1),
            slack1,
            slack2,
            step: out.step,
            accepted: out.accepted,
            backtracks: out.backtracks,
            status: cur.status,
            wall_ms: 0.0,
        };

        let mut eps_changed = false;
        if let Some((e1, e2)) = eps {
            let sq = sq_sums(&cur);
            let mut next = (e1, e2);
            if (sq.0 - prev_sq.0).abs() < sm.threshold(e1) && e1 < sm.eps_max {
                next.0 = (e1 * 2.0).min(sm.eps_max);
            }
            if (sq.1 - prev_sq.1).abs() < sm.threshold(e2) && e2 < sm.eps_max {
                next.1 = (e2 * 2.0).min(sm.eps_max);
            }
            if next != (e1, e2) {
                eps_changed = true;
                eps = Some(next);
                spec = InnerSpec::from_config(cfg, eps);
                let fresh = solve_inner(&theta, z, obj, data, &spec)?;
                if !fresh.is_optimal() {
                    return Err(CoreError::Solver(format!(
                        "smoothed inner program ended with status {:?}",
                        fresh.status
                    )));
                }
                theta = with_b(&theta, &fresh)?;
                cur = fresh;
            }
            prev_sq = sq_sums(&cur);
        }
        record.wall_ms = it_start.elapsed().as_secs_f64() * 1e3;
        log::debug!(
            "iter {t}: objective {:.6e} loss {:.6e} eps ({}, {})",
            record.objective,
            record.loss,
            record.eps1,
            record.eps2
        );
        trajectory.push(record);

        if !out.accepted && eps.is_none() {
            termination = Termination::LineSearchFailed;
            break;
        }
        if (before - cur.objective).abs() < cfg.stop_tol && !eps_changed {
            stall += 1;
            if stall >= cfg.stall_iters {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stall = 0;
        }
    }
    if cur.objective <= ZERO_LOSS && termination == Termination::MaxIters {
        termination = Termination::ZeroLoss;
    }

    // Report the unsmoothed loss at the final hypothesis.
    let (final_loss, final_slacks) = match eps {
        None => (cur.loss, (0.0, 0.0)),
        Some(_) => {
            let plain = InnerSpec::from_config(cfg, None);
            let unsmoothed = solve_inner(&theta, z, obj, data, &plain)?;
            (unsmoothed.objective, cur.slack_sums(NormKind::L2))
        }
    };
    Ok(TrainReport {
        algorithm: name.to_string(),
        initial_objective,
        trajectory,
        theta,
        final_loss,
        final_slack1: final_slacks.0,
        final_slack2: final_slacks.1,
        termination,
        wall_time_s: started.elapsed().as_secs_f64(),
        mip_gap: None,
        notes: Vec::new(),
    })
}

/// Both sides of the smoothed predictability objective at `eps = N/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingIdentity {
    /// `sum_i 1/(2 eps) ||x_i - A(s_i) z_i - b(s_i)||^2`.
    pub smoothed_term: f64,
    /// `(1/N) sum_i gamma_f,i^2` with `gamma_f,i` the Euclidean residual norm.
    pub feasibility_term: f64,
    /// Coefficient `1/N - 1/(2 eps)` of the remaining term.
    pub leftover_coefficient: f64,
}

impl SmoothingIdentity {
    pub fn holds(&self, tol: f64) -> bool {
        let scale = 1.0f64.max(self.feasibility_term.abs());
        (self.smoothed_term - self.feasibility_term).abs() <= tol * scale && self.leftover_coefficient.abs() <= tol
    }
}

/// Evaluates both sides of the `eps = N/2` identity for given primitive
/// points `zs` (visible coordinates).
pub fn smoothing_identity(
    theta: &HypothesisParams,
    zs: &[Vec<f64>],
    data: &IODataset,
    norm: NormKind,
    pair: PairNorm,
) -> Result<SmoothingIdentity> {
    if norm != NormKind::L2Squared || pair != PairNorm::Separable {
        return Err(CoreError::InvalidParameter(
            "the identity needs the squared Euclidean norm and the separable pair norm".into(),
        ));
    }
    if zs.len() != data.len() || data.is_empty() {
        return Err(CoreError::Dimension(
            "one primitive point per observation is required".into(),
        ));
    }
    let big_n = data.len() as f64;
    let eps = big_n / 2.0;
    let mut smoothed = 0.0;
    let mut feas = 0.0;
    for ((s, x), zi) in data.signals.iter().zip(&data.decisions).zip(zs) {
        let a = theta.eval_a(s)?;
        if zi.len() != a.ncols() {
            return Err(CoreError::Dimension("primitive point has the wrong length".into()));
        }
        let bs = theta.eval_b(s)?;
        let mut sq = 0.0;
        let mut resid = Vec::with_capacity(x.len());
        for r in 0..x.len() {
            let mut v = x[r] - bs[r];
            for (j, zj) in zi.iter().enumerate() {
                v -= a[(r, j)] * zj;
            }
            sq += v * v;
            resid.push(v);
        }
        smoothed += sq / (2.0 * eps);
        let gf = resid.iter().fold(0.0f64, |acc, v| acc.hypot(*v));
        feas += gf * gf;
    }
    Ok(SmoothingIdentity {
        smoothed_term: smoothed,
        feasibility_term: feas / big_n,
        leftover_coefficient: 1.0 / big_n - 1.0 / (2.0 * eps),
    })
}

/// Pass/fail form of [`smoothing_identity`] with tolerance `1e-8`.
pub fn smoothing_identity_check(
    theta: &HypothesisParams,
    zs: &[Vec<f64>],
    data: &IODataset,
    norm: NormKind,
    pair: PairNorm,
) -> Result<bool> {
    Ok(smoothing_identity(theta, zs, data, norm, pair)?.holds(1e-8))
}
