//! Experiment configuration, the seeded runner and its reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use invfeas_core::geometry::{make_primitive, PrimitiveKind, PrimitiveParams};
use invfeas_core::hypothesis::{init_params_scaled, StructureKind};
use invfeas_core::losses::EvalReport;
use invfeas_core::norms::NormSpec;
use invfeas_core::serde_inf;
use invfeas_core::{CoreError, Result};
use invfeas_train::registry::{Fitted, TrainInput, TrainerRegistry, TrainerSettings};
use invfeas_train::TrainReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_io::{add_noise, write_dataset};
use crate::generators::{GeneratorParams, GeneratorRegistry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub name: String,
    pub params: GeneratorParams,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of Gaussian noise on the training decisions.
    pub noise_std: f64,
    /// Also perturb the test decisions.
    pub noise_test: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            name: "toy".into(),
            params: GeneratorParams::default(),
            n_train: 100,
            n_test: 200,
            noise_std: 0.0,
            noise_test: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisSpec {
    pub primitive: PrimitiveKind,
    pub p: usize,
    pub params: PrimitiveParams,
    /// Only `A_0` is trained; `A(s)` does not depend on the signal.
    pub constant_a: bool,
    /// Initial `A_k` entries are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for HypothesisSpec {
    fn default() -> Self {
        HypothesisSpec {
            primitive: PrimitiveKind::Simplex,
            p: 2,
            params: PrimitiveParams::default(),
            constant_a: false,
            init_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub generator: GeneratorSpec,
    pub hypothesis: HypothesisSpec,
    pub trainer: String,
    pub settings: TrainerSettings,
    pub eval_norm: NormSpec,
    pub seeds: Vec<u64>,
    /// Also score the training split.
    pub evaluate_train: bool,
    /// Write datasets next to the report.
    pub save_data: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            generator: GeneratorSpec::default(),
            hypothesis: HypothesisSpec::default(),
            trainer: "smoothed".into(),
            settings: TrainerSettings::default(),
            eval_norm: NormSpec::default(),
            seeds: vec![0],
            evaluate_train: false,
            save_data: false,
        }
    }
}

impl ExperimentConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canon))
    }

    pub fn validate(&self) -> Result<()> {
        GeneratorRegistry::with_defaults().get(&self.generator.name)?;
        TrainerRegistry::with_defaults().get(&self.trainer)?;
        if self.seeds.is_empty() {
            return Err(CoreError::InvalidParameter("at least one seed is needed".into()));
        }
        if self.generator.n_train == 0 || self.generator.n_test == 0 {
            return Err(CoreError::InvalidParameter(
                "both splits need at least one sample".into(),
            ));
        }
        if !(self.generator.noise_std >= 0.0) {
            return Err(CoreError::InvalidParameter("noise std must be >= 0".into()));
        }
        make_primitive(self.hypothesis.primitive, self.hypothesis.p, &self.hypothesis.params)?;
        self.settings.train.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub train_report: Option<TrainReport>,
    pub eval_report: Option<EvalReport>,
    pub train_eval_report: Option<EvalReport>,
    /// Edge list of a recovered network.
    pub network: Option<serde_json::Value>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "serde_inf")]
    pub mean: f64,
    #[serde(with = "serde_inf")]
    pub std: f64,
    #[serde(with = "serde_inf")]
    pub median: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Summary {
            mean,
            std: var.sqrt(),
            median: median(values),
            count: n,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregate: BTreeMap<String, Summary>,
}

impl ExperimentReport {
    pub fn has_errors(&self) -> bool {
        self.seeds.iter().any(|s| s.error.is_some())
    }

    /// Zeroes wall-clock fields so that reruns compare byte for byte.
    pub fn strip_timing(&mut self) {
        for s in &mut self.seeds {
            if let Some(t) = &mut s.train_report {
                t.wall_time_s = 0.0;
                for rec in &mut t.trajectory {
                    rec.wall_ms = 0.0;
                }
            }
        }
        self.aggregate = aggregate(&self.seeds);
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = format!("seed,final_loss,termination,{}\n", EvalReport::csv_header());
        for s in &self.seeds {
            let (loss, term) = s.train_report.as_ref().map_or((String::new(), String::new()), |t| {
                (
                    invfeas_core::serde_inf::csv_float(t.final_loss),
                    format!("{:?}", t.termination),
                )
            });
            let eval = s
                .eval_report
                .as_ref()
                .map(EvalReport::csv_row)
                .unwrap_or_else(|| ",,,,,".into());
            out.push_str(&format!("{},{},{},{}\n", s.seed, loss, term, eval));
        }
        out
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, out_dir: Option<&Path>) -> Result<SeedReport> {
    let gens = GeneratorRegistry::with_defaults();
    let trainers = TrainerRegistry::with_defaults();
    let g = &cfg.generator;
    let generated = gens.get(&g.name)?.generate(&g.params, g.n_train, g.n_test, seed)?;
    let noise_seed = seed ^ 0x4E4F_4953_4500_0000;
    let train = add_noise(&generated.train, g.noise_std, noise_seed)?;
    let test = if g.noise_test {
        add_noise(&generated.test, g.noise_std, noise_seed.wrapping_add(1))?
    } else {
        generated.test.clone()
    };
    if cfg.save_data {
        if let Some(dir) = out_dir {
            let io = |e: anyhow::Error| CoreError::InvalidParameter(format!("writing dataset: {e}"));
            let (obj, net) = (Some(&generated.obj), generated.network.as_ref());
            write_dataset(&train, obj, net, &dir.join(format!("seed_{seed}_train.csv"))).map_err(io)?;
            write_dataset(&test, obj, net, &dir.join(format!("seed_{seed}_test.csv"))).map_err(io)?;
        }
    }

    let h = &cfg.hypothesis;
    let z = make_primitive(h.primitive, h.p, &h.params)?;
    let mut theta0 = init_params_scaled(
        (train.n(), h.p, train.k()),
        StructureKind::Free,
        1000 + seed,
        h.init_scale,
    )?;
    if h.constant_a {
        theta0 = theta0.constant_a();
    }
    let mut settings = cfg.settings.clone();
    settings.train.seed = seed;
    let input = TrainInput {
        data: &train,
        z: &z,
        obj: &generated.obj,
        theta0: Some(&theta0),
        network: generated.network.as_ref(),
    };
    let outcome = trainers.get(&cfg.trainer)?.train(&input, &settings)?;
    let oracle = Some(generated.oracle.as_ref());
    let opts = &settings.train.solve;
    let eval = outcome
        .fitted
        .evaluate(&generated.obj, &cfg.eval_norm, &test, oracle, opts)?;
    let train_eval = if cfg.evaluate_train {
        Some(
            outcome
                .fitted
                .evaluate(&generated.obj, &cfg.eval_norm, &train, oracle, opts)?,
        )
    } else {
        None
    };
    let network = match &outcome.fitted {
        Fitted::Network { model } => Some(model.edge_list()),
        Fitted::Hypothesis { .. } => None,
    };
    if let Some(dir) = out_dir {
        let io = |e: std::io::Error| CoreError::InvalidParameter(format!("writing outputs: {e}"));
        fs::write(
            dir.join(format!("seed_{seed}_trajectory.csv")),
            outcome.report.trajectory_csv(),
        )
        .map_err(io)?;
        let model = serde_json::to_string_pretty(&outcome.fitted).expect("model serializes");
        fs::write(dir.join(format!("seed_{seed}_model.json")), model).map_err(io)?;
        if let Fitted::Network { model: net } = &outcome.fitted {
            let edges = serde_json::to_string_pretty(&net.edge_list()).expect("edge list serializes");
            fs::write(dir.join(format!("seed_{seed}_edges.json")), edges).map_err(io)?;
            fs::write(dir.join(format!("seed_{seed}_network.dot")), net.to_dot()).map_err(io)?;
        }
    }
    Ok(SeedReport {
        seed,
        train_report: Some(outcome.report),
        eval_report: Some(eval),
        train_eval_report: train_eval,
        network,
        error: None,
    })
}

fn aggregate(seeds: &[SeedReport]) -> BTreeMap<String, Summary> {
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in seeds {
        if let Some(t) = &s.train_report {
            cols.entry("train_loss".into()).or_default().push(t.final_loss);
            cols.entry("wall_time_s".into()).or_default().push(t.wall_time_s);
        }
        if let Some(e) = &s.eval_report {
            cols.entry("est_pred".into()).or_default().push(e.est_pred);
            cols.entry("est_sub".into()).or_default().push(e.est_sub);
            if let Some(v) = e.true_pred {
                cols.entry("true_pred".into()).or_default().push(v);
            }
            if let Some(v) = e.true_sub {
                cols.entry("true_sub".into()).or_default().push(v);
            }
        }
    }
    cols.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect()
}

/// Runs every seed (in parallel; results in seed order), writes the report,
/// metrics CSV and per-seed artifacts to `out_dir` when given. Seed-level
/// failures are recorded in the report rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| CoreError::InvalidParameter(format!("creating {}: {e}", dir.display())))?;
    }
    let seeds: Vec<SeedReport> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            log::info!("{}: seed {seed} started", cfg.name);
            run_seed(cfg, seed, out_dir).unwrap_or_else(|e| SeedReport {
                seed,
                train_report: None,
                eval_report: None,
                train_eval_report: None,
                network: None,
                error: {
                    log::warn!("{}: seed {seed} failed: {e}", cfg.name);
                    Some(e.to_string())
                },
            })
        })
        .collect();
    let report = ExperimentReport {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        aggregate: aggregate(&seeds),
        seeds,
    };
    if let Some(dir) = out_dir {
        let io = |e: std::io::Error| CoreError::InvalidParameter(format!("writing report: {e}"));
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .map_err(io)?;
        fs::write(dir.join("metrics.csv"), report.metrics_csv()).map_err(io)?;
    }
    Ok(report)
}

pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}", cfg.name, &cfg.hash()[..12]))
}
