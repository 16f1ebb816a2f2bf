//! Trainers behind one trait, looked up by name.

use std::collections::BTreeMap;
use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::PrimitiveSet;
use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::losses::{evaluate, evaluate_model, EvalReport, TrueProblemOracle};
use invfeas_core::norms::NormSpec;
use invfeas_core::solver::SolveOptions;
use invfeas_core::{CoreError, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bcd::{train_smoothed, train_vanilla};
use crate::config::{Termination, TrainConfig, TrainReport};
use crate::convex::{convex_report, train_convex_alpha};
use crate::milp_simplex::{milp_report, train_milp_simplex, MilpSimplexConfig};
use crate::mip::MipStatus;
use crate::network::{network_backend, train_network, NetworkModel, NetworkTrainConfig};
use crate::regression::{fit_regression, regression_primitive, regression_report};

/// Options for every trainer; each reads the parts it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerSettings {
    pub train: TrainConfig,
    pub milp: MilpSimplexConfig,
    pub network: NetworkTrainConfig,
    /// `branch_and_bound` or `enumeration`.
    pub network_backend: String,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        TrainerSettings {
            train: TrainConfig::default(),
            milp: MilpSimplexConfig::default(),
            network: NetworkTrainConfig::default(),
            network_backend: "branch_and_bound".into(),
        }
    }
}

pub struct TrainInput<'a> {
    pub data: &'a IODataset,
    pub z: &'a PrimitiveSet,
    pub obj: &'a ObjectiveSpec,
    /// Starting point (gradient trainers) or shape and trainable masks (MILP).
    pub theta0: Option<&'a HypothesisParams>,
    /// Candidate lines and known data of a network (network trainer).
    pub network: Option<&'a NetworkModel>,
}

/// What a trainer learned, in a form that can be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fitted {
    Hypothesis { theta: HypothesisParams, z: PrimitiveSet },
    Network { model: NetworkModel },
}

impl Fitted {
    pub fn evaluate(
        &self,
        obj: &ObjectiveSpec,
        norm: &NormSpec,
        data: &IODataset,
        oracle: Option<&dyn TrueProblemOracle>,
        opts: &SolveOptions,
    ) -> Result<EvalReport> {
        match self {
            Fitted::Hypothesis { theta, z } => evaluate(theta, z, obj, norm, data, oracle, opts),
            Fitted::Network { model } => evaluate_model(model, norm, data, oracle, opts),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub fitted: Fitted,
}

pub trait Trainer: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome>;
}

fn need_theta<'a>(input: &TrainInput<'a>, who: &str) -> Result<&'a HypothesisParams> {
    input
        .theta0
        .ok_or_else(|| CoreError::InvalidParameter(format!("the {who} trainer needs an initial hypothesis")))
}

struct Vanilla;

impl Trainer for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome> {
        let mut cfg = settings.train.clone();
        cfg.smoothing.enabled = false;
        let report = train_vanilla(input.data, input.z, input.obj, &cfg, need_theta(input, "vanilla")?)?;
        Ok(TrainOutcome {
            fitted: Fitted::Hypothesis {
                theta: report.theta.clone(),
                z: input.z.clone(),
            },
            report,
        })
    }
}

struct Smoothed;

impl Trainer for Smoothed {
    fn name(&self) -> &'static str {
        "smoothed"
    }

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome> {
        let mut cfg = settings.train.clone();
        cfg.smoothing.enabled = true;
        let report = train_smoothed(input.data, input.z, input.obj, &cfg, need_theta(input, "smoothed")?)?;
        Ok(TrainOutcome {
            fitted: Fitted::Hypothesis {
                theta: report.theta.clone(),
                z: input.z.clone(),
            },
            report,
        })
    }
}

struct Convex;

impl Trainer for Convex {
    fn name(&self) -> &'static str {
        "convex"
    }

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome> {
        let started = Instant::now();
        let t = &settings.train;
        let fit = train_convex_alpha(input.data, input.z, input.obj, &t.norm, t.loss, &t.solve)?;
        Ok(TrainOutcome {
            report: convex_report(&fit, started),
            fitted: Fitted::Hypothesis {
                theta: fit.theta,
                z: input.z.clone(),
            },
        })
    }
}

struct Milp;

impl Trainer for Milp {
    fn name(&self) -> &'static str {
        "milp"
    }

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome> {
        let started = Instant::now();
        let t = &settings.train;
        let shape = need_theta(input, "milp")?;
        let cfg = MilpSimplexConfig {
            p: shape.p(),
            ..settings.milp
        };
        if input.z.dim != shape.p() || input.z.is_lifted() {
            return Err(CoreError::InvalidParameter(
                "the milp trainer uses the (binary) simplex of the hypothesis dimension".into(),
            ));
        }
        let fit = train_milp_simplex(input.data, input.obj, shape, &t.norm, t.loss, &cfg, &t.solve)?;
        Ok(TrainOutcome {
            report: milp_report(&fit, started),
            fitted: Fitted::Hypothesis {
                theta: fit.theta,
                z: input.z.clone(),
            },
        })
    }
}

struct Network;

impl Trainer for Network {
    fn name(&self) -> &'static str {
        "network"
    }

    fn train(&self, input: &TrainInput, settings: &TrainerSettings) -> Result<TrainOutcome> {
        let started = Instant::now();
        let net = input
            .network
            .ok_or_else(|| CoreError::InvalidParameter("the network trainer needs a network description".into()))?;
        let t = &settings.train;
        let backend = network_backend(&settings.network_backend)?;
        let fit = train_network(
            input.data,
            net,
            t.loss,
            &t.norm,
            backend.as_ref(),
            &settings.network,
            &t.solve,
        )?;
        // Node-space view: A = signed incidence of the chosen lines, b(s) = demand.
        let k = net.signal_dim();
        let mut b = vec![DVector::zeros(net.nodes); k + 1];
        for (r, &sig) in net.demand_signals.iter().enumerate() {
            b[sig + 1][r] = 1.0;
        }
        let theta =
            HypothesisParams::signed_incidence(net.nodes, net.candidates.clone(), fit.model.selected.clone(), b)?;
        let report = TrainReport {
            algorithm: format!("network_{}", fit.backend),
            initial_objective: fit.train_loss,
            trajectory: Vec::new(),
            theta,
            final_loss: fit.train_loss,
            final_slack1: 0.0,
            final_slack2: 0.0,
            termination: if fit.status == MipStatus::Optimal {
                Termination::Exact
            } else {
                Termination::Budget
            },
            wall_time_s: started.elapsed().as_secs_f64(),
            mip_gap: Some((fit.train_loss - fit.bound).max(0.0)),
            notes: vec![
                format!("lines {}", fit.model.selected.iter().filter(|&&y| y).count()),
                format!("solves {}", fit.nodes),
            ],
        };
        Ok(TrainOutcome {
            report,
            fitted: Fitted::Network { model: fit.model },
        })
    }
}

struct Regression;

impl Trainer for Regression {
    fn name(&self) -> &'static str {
        "regression"
    }

    fn train(&self, input: &TrainInput, _settings: &TrainerSettings) -> Result<TrainOutcome> {
        let started = Instant::now();
        let fit = fit_regression(input.data)?;
        Ok(TrainOutcome {
            report: regression_report(&fit, started),
            fitted: Fitted::Hypothesis {
                theta: fit.theta,
                z: regression_primitive(),
            },
        })
    }
}

pub struct TrainerRegistry {
    trainers: BTreeMap<&'static str, Box<dyn Trainer>>,
}

impl TrainerRegistry {
    pub fn empty() -> Self {
        TrainerRegistry {
            trainers: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Vanilla));
        r.register(Box::new(Smoothed));
        r.register(Box::new(Convex));
        r.register(Box::new(Milp));
        r.register(Box::new(Network));
        r.register(Box::new(Regression));
        r
    }

    /// Replaces any trainer of the same name.
    pub fn register(&mut self, t: Box<dyn Trainer>) {
        self.trainers.insert(t.name(), t);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Trainer> {
        self.trainers.get(name).map(|t| t.as_ref()).ok_or_else(|| {
            CoreError::InvalidParameter(format!("unknown trainer `{name}` (known: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.trainers.keys().copied().collect()
    }
}

impl Default for TrainerRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
