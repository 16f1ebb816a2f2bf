//! Point-wise predictability and suboptimality losses, their counterparts
//! against a known true problem, and the four-metric dataset evaluation.
//!
//! Losses are evaluated in two stages: the optimal value `V(s)` first, then
//! one projection program. The predictability loss is
//! `min ||gamma||  s.t.  x + gamma feasible, c'(x + gamma) <= V(s)`; the
//! suboptimality loss combines `gamma_f = dist(x, feasible set)` and
//! `gamma_o = max(0, c'x - V(s))` with the pair norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::IODataset;
use crate::decision_set::{DecisionSet, LinearMin};
use crate::error::{CoreError, Result};
use crate::forward::{solve_forward, ObjectiveSpec};
use crate::geometry::PrimitiveSet;
use crate::hypothesis::HypothesisParams;
use crate::linalg::dot;
use crate::norms::{pair_value, NormSpec};
use crate::serde_inf::{self, csv_float};
use crate::solver::{SolveOptions, SolveStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct PredLoss {
    pub loss: f64,
    /// Empty when the loss is infinite.
    pub gamma: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubLoss {
    pub loss: f64,
    pub gamma_f: f64,
    pub gamma_o: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueLosses {
    #[serde(with = "serde_inf")]
    pub pred: f64,
    #[serde(with = "serde_inf")]
    pub sub: f64,
}

/// A known forward problem `min c(s)'x  s.t.  x ∈ X(s)` used to score
/// learned policies.
pub trait TrueProblemOracle: Send + Sync + std::fmt::Debug {
    fn cost(&self, s: &[f64]) -> Result<Vec<f64>>;

    fn decision_set(&self, s: &[f64]) -> Result<DecisionSet>;

    /// A JSON description of the problem, stored next to datasets.
    fn describe(&self) -> serde_json::Value;

    /// Optimal decision and value at `s`.
    fn solve(&self, s: &[f64], opts: &SolveOptions) -> Result<LinearMin> {
        let set = self.decision_set(s)?;
        let c = self.cost(s)?;
        let res = set.minimize(&c, opts)?;
        if res.status != SolveStatus::Optimal {
            return Err(CoreError::Solver(format!(
                "true problem at the given signal ended with status {:?}",
                res.status
            )));
        }
        Ok(res)
    }

    /// Feasibility residual `min ||x - y||` over feasible `y`.
    fn residual(&self, x: &[f64], s: &[f64], norm: &NormSpec, opts: &SolveOptions) -> Result<f64> {
        Ok(self.decision_set(s)?.project(x, norm.gamma, opts)?.distance)
    }
}

fn losses_against(
    set: &DecisionSet,
    c: &[f64],
    value: f64,
    norm: &NormSpec,
    x: &[f64],
    opts: &SolveOptions,
) -> Result<(PredLoss, SubLoss)> {
    let proj = set.project_optimal(x, c, value, norm.gamma, opts)?;
    let dist = set.project(x, norm.gamma, opts)?.distance;
    let gamma_o = (dot(c, x) - value).max(0.0);
    Ok((
        PredLoss {
            loss: proj.distance,
            gamma: proj.gamma,
        },
        SubLoss {
            loss: pair_value(norm.pair, dist, gamma_o),
            gamma_f: dist,
            gamma_o,
        },
    ))
}

fn infinite() -> (PredLoss, SubLoss) {
    (
        PredLoss {
            loss: f64::INFINITY,
            gamma: Vec::new(),
        },
        SubLoss {
            loss: f64::INFINITY,
            gamma_f: 0.0,
            gamma_o: f64::INFINITY,
        },
    )
}

/// Both estimated losses at one point; shares the forward solve.
pub fn point_losses(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    opts: &SolveOptions,
) -> Result<(PredLoss, SubLoss)> {
    let fwd = solve_forward(theta, z, obj, s, opts)?;
    match fwd.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return Ok(infinite()),
        other => {
            return Err(CoreError::Solver(format!(
                "forward problem ended with status {other:?}"
            )));
        }
    }
    let set = DecisionSet::from_hypothesis(theta, z, s)?;
    losses_against(&set, &obj.cost(s)?, fwd.value, norm, x, opts)
}

pub fn pred_loss(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    opts: &SolveOptions,
) -> Result<PredLoss> {
    let fwd = solve_forward(theta, z, obj, s, opts)?;
    match fwd.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return Ok(infinite().0),
        other => {
            return Err(CoreError::Solver(format!(
                "forward problem ended with status {other:?}"
            )));
        }
    }
    let set = DecisionSet::from_hypothesis(theta, z, s)?;
    let proj = set.project_optimal(x, &obj.cost(s)?, fwd.value, norm.gamma, opts)?;
    Ok(PredLoss {
        loss: proj.distance,
        gamma: proj.gamma,
    })
}

pub fn sub_loss(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    opts: &SolveOptions,
) -> Result<SubLoss> {
    let fwd = solve_forward(theta, z, obj, s, opts)?;
    match fwd.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return Ok(infinite().1),
        other => {
            return Err(CoreError::Solver(format!(
                "forward problem ended with status {other:?}"
            )));
        }
    }
    let set = DecisionSet::from_hypothesis(theta, z, s)?;
    let gamma_f = set.project(x, norm.gamma, opts)?.distance;
    let gamma_o = (dot(&obj.cost(s)?, x) - fwd.value).max(0.0);
    Ok(SubLoss {
        loss: pair_value(norm.pair, gamma_f, gamma_o),
        gamma_f,
        gamma_o,
    })
}

/// Losses of `x` measured against the true problem at `s`.
pub fn true_losses(
    oracle: &dyn TrueProblemOracle,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    opts: &SolveOptions,
) -> Result<TrueLosses> {
    let set = oracle.decision_set(s)?;
    let c = oracle.cost(s)?;
    let best = oracle.solve(s, opts)?;
    let (p, sub) = losses_against(&set, &c, best.value, norm, x, opts)?;
    Ok(TrueLosses {
        pred: p.loss,
        sub: sub.loss,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEval {
    #[serde(with = "serde_inf")]
    pub est_pred: f64,
    #[serde(with = "serde_inf")]
    pub est_sub: f64,
    #[serde(with = "serde_inf::option")]
    pub true_pred: Option<f64>,
    #[serde(with = "serde_inf::option")]
    pub true_sub: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(with = "serde_inf")]
    pub est_pred: f64,
    #[serde(with = "serde_inf")]
    pub est_sub: f64,
    #[serde(with = "serde_inf::option")]
    pub true_pred: Option<f64>,
    #[serde(with = "serde_inf::option")]
    pub true_sub: Option<f64>,
    pub n_points: usize,
    /// Points skipped because a subproblem did not solve.
    pub n_failed: usize,
    pub failures: Vec<String>,
    pub points: Vec<Option<PointEval>>,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "est_pred,est_sub,true_pred,true_sub,n_points,n_failed"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            csv_float(self.est_pred),
            csv_float(self.est_sub),
            opt(self.true_pred),
            opt(self.true_sub),
            self.n_points,
            self.n_failed
        )
    }

    /// Largest of the available metrics.
    pub fn max_metric(&self) -> f64 {
        [Some(self.est_pred), Some(self.est_sub), self.true_pred, self.true_sub]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

// Scores `x` given the learned model's decision set and forward solution
// (`None` when the learned problem has no finite optimum).
fn score_point(
    learned: Option<(DecisionSet, Vec<f64>, f64, Vec<f64>)>,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    oracle: Option<&dyn TrueProblemOracle>,
    opts: &SolveOptions,
) -> Result<PointEval> {
    let (est, recovered) = match learned {
        Some((set, c, value, x_star)) => (losses_against(&set, &c, value, norm, x, opts)?, Some(x_star)),
        None => (infinite(), None),
    };
    let truth = match (oracle, recovered) {
        (Some(o), Some(xs)) => Some(true_losses(o, norm, &xs, s, opts)?),
        (Some(_), None) => Some(TrueLosses {
            pred: f64::INFINITY,
            sub: f64::INFINITY,
        }),
        (None, _) => None,
    };
    Ok(PointEval {
        est_pred: est.0.loss,
        est_sub: est.1.loss,
        true_pred: truth.map(|t| t.pred),
        true_sub: truth.map(|t| t.sub),
    })
}

fn eval_point(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    oracle: Option<&dyn TrueProblemOracle>,
    opts: &SolveOptions,
) -> Result<PointEval> {
    let fwd = solve_forward(theta, z, obj, s, opts)?;
    let learned = match fwd.status {
        SolveStatus::Optimal => Some((
            DecisionSet::from_hypothesis(theta, z, s)?,
            obj.cost(s)?,
            fwd.value,
            fwd.x_star,
        )),
        SolveStatus::Unbounded => None,
        other => {
            return Err(CoreError::Solver(format!(
                "forward problem ended with status {other:?}"
            )));
        }
    };
    score_point(learned, norm, x, s, oracle, opts)
}

fn eval_model_point(
    model: &dyn TrueProblemOracle,
    norm: &NormSpec,
    x: &[f64],
    s: &[f64],
    oracle: Option<&dyn TrueProblemOracle>,
    opts: &SolveOptions,
) -> Result<PointEval> {
    let set = model.decision_set(s)?;
    let c = model.cost(s)?;
    let fwd = set.minimize(&c, opts)?;
    let learned = match fwd.status {
        SolveStatus::Optimal => Some((set, c, fwd.value, fwd.x)),
        SolveStatus::Unbounded | SolveStatus::Infeasible => None,
        other => {
            return Err(CoreError::Solver(format!(
                "learned problem ended with status {other:?}"
            )));
        }
    };
    score_point(learned, norm, x, s, oracle, opts)
}

/// Means of the estimated losses at the observations and of the true losses
/// at the recovered decisions. Points whose subproblems fail are skipped and
/// counted.
pub fn evaluate(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    data: &IODataset,
    oracle: Option<&dyn TrueProblemOracle>,
    opts: &SolveOptions,
) -> Result<EvalReport> {
    collect_report(data, oracle.is_some(), |i| {
        eval_point(theta, z, obj, norm, &data.decisions[i], &data.signals[i], oracle, opts)
    })
}

/// As [`evaluate`], for a learned model given directly as a forward problem
/// (e.g. a recovered network) rather than through a hypothesis. A learned
/// problem that is infeasible at a signal scores infinite losses there.
pub fn evaluate_model(
    model: &dyn TrueProblemOracle,
    norm: &NormSpec,
    data: &IODataset,
    oracle: Option<&dyn TrueProblemOracle>,
    opts: &SolveOptions,
) -> Result<EvalReport> {
    collect_report(data, oracle.is_some(), |i| {
        eval_model_point(model, norm, &data.decisions[i], &data.signals[i], oracle, opts)
    })
}

fn collect_report<F>(data: &IODataset, has_truth: bool, point: F) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<PointEval> + Sync,
{
    if data.is_empty() {
        return Err(CoreError::InvalidParameter(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let results: Vec<Result<PointEval>> = (0..data.len()).into_par_iter().map(&point).collect();
    // Fixed-order reduction keeps reports bitwise reproducible.
    let mut sums = [0.0f64; 4];
    let mut ok = 0usize;
    let mut failures = Vec::new();
    let mut points = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                sums[0] += p.est_pred;
                sums[1] += p.est_sub;
                sums[2] += p.true_pred.unwrap_or(0.0);
                sums[3] += p.true_sub.unwrap_or(0.0);
                ok += 1;
                points.push(Some(p));
            }
            Err(e) => {
                failures.push(format!("point {i}: {e}"));
                points.push(None);
            }
        }
    }
    let mean = |v: f64| if ok == 0 { f64::NAN } else { v / ok as f64 };
    Ok(EvalReport {
        est_pred: mean(sums[0]),
        est_sub: mean(sums[1]),
        true_pred: has_truth.then(|| mean(sums[2])),
        true_sub: has_truth.then(|| mean(sums[3])),
        n_points: data.len(),
        n_failed: failures.len(),
        failures,
        points,
    })
}
