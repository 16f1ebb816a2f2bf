use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::norms::{NormKind, NormSpec};
use invfeas_core::serde_inf;
use invfeas_core::solver::{SolveOptions, SolveStatus};
use invfeas_core::CoreError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Predictability,
    Suboptimality,
}

impl std::str::FromStr for LossKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "pred" | "predictability" => Ok(Self::Predictability),
            "sub" | "suboptimality" => Ok(Self::Suboptimality),
            other => Err(CoreError::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoParams {
    pub c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_backtracks: u32,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_backtracks: 30,
        }
    }
}

/// How the smoothing slack penalties are weighted against the data term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackScale {
    /// `(1/N) sum_i (||gamma_i|| + eps1 ||gamma_s1,i|| + eps2 ||gamma_s2,i||)`.
    Mean,
    /// `(1/N) sum_i ||gamma_i|| + eps1 sum_i ||gamma_s1,i|| + eps2 sum_i ||gamma_s2,i||`.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingParams {
    pub enabled: bool,
    pub eps1: f64,
    pub eps2: f64,
    /// Doubling stops here.
    pub eps_max: f64,
    /// Threshold on the change of `sum ||gamma_s||^2` is
    /// `base / 10^(log2(eps) + 1)`.
    pub threshold_base: f64,
    pub slack_norm: NormKind,
    pub slack_scale: SlackScale,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams {
            enabled: false,
            eps1: 1.0,
            eps2: 1.0,
            eps_max: 65536.0,
            threshold_base: 0.01,
            slack_norm: NormKind::L2Squared,
            slack_scale: SlackScale::Mean,
        }
    }
}

impl SmoothingParams {
    pub fn on() -> Self {
        SmoothingParams {
            enabled: true,
            ..Default::default()
        }
    }

    /// Slack-change threshold for the current value of one `eps`.
    pub fn threshold(&self, eps: f64) -> f64 {
        self.threshold_base / 10f64.powf(eps.log2() + 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub norm: NormSpec,
    pub max_iters: usize,
    pub armijo: ArmijoParams,
    pub smoothing: SmoothingParams,
    pub seed: u64,
    /// Stop after `stall_iters` consecutive iterations with `|Δloss| < stop_tol`.
    pub stop_tol: f64,
    pub stall_iters: usize,
    pub solve: SolveOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Predictability,
            norm: NormSpec::default(),
            max_iters: 500,
            armijo: ArmijoParams::default(),
            smoothing: SmoothingParams::default(),
            seed: 0,
            stop_tol: 1e-8,
            stall_iters: 10,
            solve: SolveOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |m: &str| Err(CoreError::InvalidParameter(m.into()));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.armijo.initial_step > 0.0) {
            return bad("initial step must be positive");
        }
        if !(self.armijo.shrink > 0.0 && self.armijo.shrink < 1.0) {
            return bad("Armijo shrink factor must lie in (0, 1)");
        }
        if self.smoothing.enabled && !(self.smoothing.eps1 > 0.0 && self.smoothing.eps2 > 0.0) {
            return bad("smoothing parameters must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    Stalled,
    ZeroLoss,
    LineSearchFailed,
    /// Single-shot trainers (convex, mixed-integer, regression).
    Exact,
    /// Mixed-integer search stopped by its node budget.
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Objective of the current inner program (smoothed when smoothing is on).
    #[serde(with = "serde_inf")]
    pub objective: f64,
    /// Data term `(1/N) sum_i loss_i` of that program.
    #[serde(with = "serde_inf")]
    pub loss: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// `sum_i ||gamma_s1,i||_2` and `sum_i ||gamma_s2,i||_2`.
    pub slack1: f64,
    pub slack2: f64,
    pub step: f64,
    pub accepted: bool,
    pub backtracks: u32,
    pub status: SolveStatus,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algorithm: String,
    #[serde(with = "serde_inf")]
    pub initial_objective: f64,
    pub trajectory: Vec<IterationRecord>,
    pub theta: HypothesisParams,
    /// Unsmoothed training loss at the final hypothesis.
    #[serde(with = "serde_inf")]
    pub final_loss: f64,
    /// Slack magnitudes `sum_i ||gamma_s,i||_2` of the last smoothed program.
    pub final_slack1: f64,
    pub final_slack2: f64,
    pub termination: Termination,
    pub wall_time_s: f64,
    /// Mixed-integer optimality gap, where applicable.
    #[serde(with = "serde_inf::option")]
    pub mip_gap: Option<f64>,
    pub notes: Vec<String>,
}

impl TrainReport {
    pub fn trajectory_csv(&self) -> String {
        let mut out =
            String::from("iteration,objective,loss,eps1,eps2,slack1,slack2,step,accepted,backtracks,status\n");
        for r in &self.trajectory {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{:?}\n",
                r.iter,
                serde_inf::csv_float(r.objective),
                serde_inf::csv_float(r.loss),
                r.eps1,
                r.eps2,
                serde_inf::csv_float(r.slack1),
                serde_inf::csv_float(r.slack2),
                r.step,
                r.accepted,
                r.backtracks,
                r.status
            ));
        }
        out
    }

    /// Largest increase of the objective between consecutive accepted
    /// iterations that share the same smoothing parameters.
    pub fn max_monotonicity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut prev: Option<&IterationRecord> = None;
        for r in self.trajectory.iter().filter(|r| r.accepted) {
            if let Some(p) = prev {
                if p.eps1 == r.eps1 && p.eps2 == r.eps2 {
                    worst = worst.max(r.objective - p.objective);
                }
            }
            prev = Some(r);
        }
        worst
    }
}
