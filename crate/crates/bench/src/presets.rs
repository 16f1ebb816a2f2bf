//! Named experiment configurations.

use invfeas_core::geometry::{PrimitiveKind, PrimitiveParams};
use invfeas_core::norms::{NormKind, NormSpec, PairNorm};
use invfeas_core::{CoreError, Result};
use invfeas_train::config::SmoothingParams;
use invfeas_train::LossKind;

use crate::experiment::{ExperimentConfig, GeneratorSpec, HypothesisSpec};
use crate::generators::GeneratorParams;

pub const PRESETS: [&str; 14] = [
    "toy",
    "table5_noiseless_p5",
    "table5_noiseless_p4",
    "table5_smoothed_p5",
    "table1_alg_comparison",
    "table1_vanilla",
    "table1_vanilla_sub",
    "g1_convex",
    "g1_noisy",
    "network_recovery",
    "power5_smoothed_p3",
    "power5_smoothed_p6",
    "power5_regression",
    "ieee14_smoothed_p6",
];

/// The n = 5 L1-ball study with cost signals on `[0, 1]`.
fn l1_study_n5() -> GeneratorSpec {
    GeneratorSpec {
        name: "synthetic_l1".into(),
        params: GeneratorParams {
            n: Some(5),
            cost_range: Some((0.0, 1.0)),
            ..GeneratorParams::default()
        },
        n_train: 100,
        n_test: 200,
        ..GeneratorSpec::default()
    }
}

fn simplex(p: usize, constant_a: bool) -> HypothesisSpec {
    HypothesisSpec {
        primitive: PrimitiveKind::Simplex,
        p,
        constant_a,
        ..HypothesisSpec::default()
    }
}

fn smoothed(mut cfg: ExperimentConfig, iters: usize) -> ExperimentConfig {
    cfg.trainer = "smoothed".into();
    cfg.settings.train.smoothing = SmoothingParams::on();
    cfg.settings.train.max_iters = iters;
    cfg
}

fn milp(p: usize, time_limit: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        generator: l1_study_n5(),
        hypothesis: simplex(p, true),
        trainer: "milp".into(),
        ..ExperimentConfig::default()
    };
    cfg.settings.train.norm = NormSpec {
        gamma: NormKind::L2,
        pair: PairNorm::Separable,
    };
    cfg.settings.milp.branch.time_limit = Some(time_limit);
    cfg
}

fn power5(p: usize) -> ExperimentConfig {
    let cfg = ExperimentConfig {
        generator: GeneratorSpec {
            name: "power5".into(),
            ..GeneratorSpec::default()
        },
        hypothesis: simplex(p, false),
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    smoothed(cfg, 1000)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut cfg = match name {
        "toy" => smoothed(
            ExperimentConfig {
                hypothesis: simplex(2, false),
                ..ExperimentConfig::default()
            },
            100,
        ),
        "table5_noiseless_p5" => milp(5, 300.0),
        "table5_noiseless_p4" => milp(4, 120.0),
        "table5_smoothed_p5" => smoothed(
            ExperimentConfig {
                generator: l1_study_n5(),
                hypothesis: simplex(5, true),
                ..ExperimentConfig::default()
            },
            500,
        ),
        "table1_alg_comparison" => {
            let mut cfg = preset("table5_smoothed_p5")?;
            cfg.seeds = (0..10).collect();
            cfg.evaluate_train = false;
            cfg
        }
        "table1_vanilla" => {
            let mut cfg = preset("table1_alg_comparison")?;
            cfg.trainer = "vanilla".into();
            cfg.settings.train.smoothing = SmoothingParams::default();
            cfg
        }
        "table1_vanilla_sub" => {
            let mut cfg = preset("table1_vanilla")?;
            cfg.settings.train.loss = LossKind::Suboptimality;
            cfg
        }
        "g1_convex" => ExperimentConfig {
            generator: GeneratorSpec {
                name: "synthetic_l1".into(),
                params: GeneratorParams {
                    n: Some(2),
                    cost_range: Some((-1.0, 1.0)),
                    ..GeneratorParams::default()
                },
                n_train: 100,
                n_test: 500,
                ..GeneratorSpec::default()
            },
            hypothesis: HypothesisSpec {
                primitive: PrimitiveKind::L1Ball,
                p: 2,
                params: PrimitiveParams::default(),
                ..HypothesisSpec::default()
            },
            trainer: "convex".into(),
            ..ExperimentConfig::default()
        },
        "g1_noisy" => {
            let mut cfg = preset("g1_convex")?;
            cfg.generator.noise_std = 0.2;
            cfg.seeds = (0..5).collect();
            cfg
        }
        "network_recovery" => ExperimentConfig {
            generator: GeneratorSpec {
                name: "power5".into(),
                ..GeneratorSpec::default()
            },
            trainer: "network".into(),
            evaluate_train: true,
            ..ExperimentConfig::default()
        },
        "power5_smoothed_p3" => power5(3),
        "power5_smoothed_p6" => power5(6),
        "power5_regression" => ExperimentConfig {
            trainer: "regression".into(),
            ..power5(1)
        },
        "ieee14_smoothed_p6" => {
            let mut cfg = power5(6);
            cfg.generator.name = "ieee14".into();
            cfg
        }
        _ => {
            return Err(CoreError::InvalidParameter(format!(
                "unknown preset `{name}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.name = name.into();
    Ok(cfg)
}
