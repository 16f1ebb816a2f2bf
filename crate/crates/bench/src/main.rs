use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use invfeas_bench::data_io::{add_noise, read_dataset, write_dataset};
use invfeas_bench::experiment::{default_out_dir, run_experiment, ExperimentConfig, ExperimentReport};
use invfeas_bench::generators::GeneratorRegistry;
use invfeas_bench::presets::{preset, PRESETS};
use invfeas_core::geometry::make_primitive;
use invfeas_core::hypothesis::{init_params_scaled, StructureKind};
use invfeas_core::norms::{NormKind, NormSpec};
use invfeas_core::CoreError;
use invfeas_train::registry::{Fitted, TrainInput, TrainerRegistry};
use invfeas_train::LossKind;

#[derive(Parser)]
#[command(
    name = "invfeas",
    version,
    about = "Learn feasible regions of parametric LPs from decisions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named configuration; see `invfeas list`.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// vanilla | smoothed | convex | milp | network | regression
    #[arg(long)]
    trainer: Option<String>,
    /// pred | sub
    #[arg(long)]
    loss: Option<LossKind>,
    /// l1 | l2 | l2sq | linf (training and evaluation)
    #[arg(long)]
    norm: Option<NormKind>,
    /// Training samples per seed.
    #[arg(long)]
    n_train: Option<usize>,
    /// Iteration budget of the gradient trainers.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train and test datasets to CSV files.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to a dataset file.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training CSV (with its JSON sidecar).
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a saved model on a dataset file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Model JSON written by `train` or `experiment`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate, train and evaluate for every seed.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Print the aggregate table of a report.
    Report {
        /// `report.json` or the directory holding it.
        path: PathBuf,
    },
    /// List presets, generators and trainers.
    List,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Dimension(_) | CoreError::InvalidParameter(_) => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(t) = &c.trainer {
        cfg.trainer = t.clone();
    }
    if let Some(l) = c.loss {
        cfg.settings.train.loss = l;
    }
    if let Some(n) = c.norm {
        cfg.settings.train.norm.gamma = n;
        cfg.eval_norm.gamma = n;
    }
    if let Some(n) = c.n_train {
        cfg.generator.n_train = n;
    }
    if let Some(n) = c.max_iters {
        cfg.settings.train.max_iters = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Solver(e.to_string()))?;
    fs::write(path, text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = c.out_dir.clone().unwrap_or_else(|| default_out_dir(cfg));
    fs::create_dir_all(&dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn generate(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let dir = out_dir(c, &cfg)?;
    let g = &cfg.generator;
    let gens = GeneratorRegistry::with_defaults();
    for &seed in &cfg.seeds {
        let out = gens.get(&g.name)?.generate(&g.params, g.n_train, g.n_test, seed)?;
        let noise_seed = seed ^ 0x4E4F_4953_4500_0000;
        let train = add_noise(&out.train, g.noise_std, noise_seed)?;
        let test = if g.noise_test {
            add_noise(&out.test, g.noise_std, noise_seed.wrapping_add(1))?
        } else {
            out.test
        };
        for (split, data) in [("train", &train), ("test", &test)] {
            let path = dir.join(format!("seed_{seed}_{split}.csv"));
            write_dataset(data, Some(&out.obj), out.network.as_ref(), &path).map_err(config_err)?;
            println!("{} ({} samples)", path.display(), data.len());
        }
    }
    Ok(())
}

fn train(c: &Common, data_path: &Path) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let loaded = read_dataset(data_path).map_err(config_err)?;
    let data = &loaded.data;
    let obj = loaded
        .objective
        .ok_or_else(|| config_err("the dataset sidecar does not describe the objective"))?;
    let h = &cfg.hypothesis;
    let z = make_primitive(h.primitive, h.p, &h.params)?;
    let seed = cfg.seeds[0];
    let mut theta0 = init_params_scaled(
        (data.n(), h.p, data.k()),
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
        data,
        z: &z,
        obj: &obj,
        theta0: Some(&theta0),
        network: loaded.network.as_ref(),
    };
    let outcome = TrainerRegistry::with_defaults()
        .get(&cfg.trainer)?
        .train(&input, &settings)?;
    let dir = out_dir(c, &cfg)?;
    write_json(&dir.join("train_report.json"), &outcome.report)?;
    write_json(&dir.join("model.json"), &outcome.fitted)?;
    fs::write(dir.join("trajectory.csv"), outcome.report.trajectory_csv()).map_err(config_err)?;
    if let Fitted::Network { model } = &outcome.fitted {
        write_json(&dir.join("edges.json"), &model.edge_list())?;
        fs::write(dir.join("network.dot"), model.to_dot()).map_err(config_err)?;
    }
    println!(
        "{}: loss {:.6e} ({:?}) in {:.1}s -> {}",
        outcome.report.algorithm,
        outcome.report.final_loss,
        outcome.report.termination,
        outcome.report.wall_time_s,
        dir.display()
    );
    Ok(())
}

fn evaluate(c: &Common, data_path: &Path, model_path: &Path) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let loaded = read_dataset(data_path).map_err(config_err)?;
    let obj = loaded
        .objective
        .ok_or_else(|| config_err("the dataset sidecar does not describe the objective"))?;
    let text = fs::read_to_string(model_path).map_err(|e| config_err(format!("{}: {e}", model_path.display())))?;
    let fitted: Fitted =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", model_path.display())))?;
    let norm: NormSpec = cfg.eval_norm;
    let oracle = loaded.data.oracle.as_deref();
    let rep = fitted.evaluate(&obj, &norm, &loaded.data, oracle, &cfg.settings.train.solve)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&rep).map_err(|e| Failure::Solver(e.to_string()))?
    );
    if let Some(dir) = &c.out_dir {
        fs::create_dir_all(dir).map_err(config_err)?;
        write_json(&dir.join("eval_report.json"), &rep)?;
    }
    Ok(())
}

fn print_report(rep: &ExperimentReport) {
    println!("{} ({})", rep.name, &rep.config_hash[..12]);
    println!(
        "{:<12} {:>13} {:>13} {:>13} {:>6}",
        "metric", "mean", "std", "median", "count"
    );
    for (k, s) in &rep.aggregate {
        println!(
            "{k:<12} {:>13.4e} {:>13.4e} {:>13.4e} {:>6}",
            s.mean, s.std, s.median, s.count
        );
    }
    for s in &rep.seeds {
        if let Some(e) = &s.error {
            println!("seed {}: error: {e}", s.seed);
        }
    }
}

fn experiment(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let dir = out_dir(c, &cfg)?;
    let rep = run_experiment(&cfg, Some(&dir))?;
    print_report(&rep);
    println!("-> {}", dir.display());
    if let Some(e) = rep.seeds.iter().find_map(|s| s.error.clone()) {
        return Err(Failure::Solver(e));
    }
    Ok(())
}

fn report(path: &Path) -> Result<(), Failure> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| config_err(format!("{}: {e}", file.display())))?;
    let rep: ExperimentReport =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", file.display())))?;
    print_report(&rep);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Generate { common } => generate(common),
        Command::Train { common, data } => train(common, data),
        Command::Evaluate { common, data, model } => evaluate(common, data, model),
        Command::Experiment { common } => experiment(common),
        Command::Report { path } => report(path),
        Command::List => {
            println!("presets:    {}", PRESETS.join(", "));
            println!("generators: {}", GeneratorRegistry::with_defaults().names().join(", "));
            println!("trainers:   {}", TrainerRegistry::with_defaults().names().join(", "));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
