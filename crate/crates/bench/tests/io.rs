use std::process::Command;

use invfeas_bench::data_io::{add_noise, read_dataset, sidecar_path, write_dataset};
use invfeas_bench::experiment::{run_experiment, ExperimentConfig};
use invfeas_bench::generators::{GeneratorParams, GeneratorRegistry};
use invfeas_bench::presets::{preset, PRESETS};
use invfeas_core::losses::true_losses;
use invfeas_core::norms::NormSpec;
use invfeas_core::solver::SolveOptions;

fn l1_data(n_train: usize, seed: u64) -> invfeas_bench::generators::Generated {
    let params = GeneratorParams {
        n: Some(4),
        ..GeneratorParams::default()
    };
    GeneratorRegistry::with_defaults()
        .get("synthetic_l1")
        .unwrap()
        .generate(&params, n_train, 10, seed)
        .unwrap()
}

#[test]
fn zero_noise_is_the_identity() {
    let g = l1_data(50, 0);
    let same = add_noise(&g.train, 0.0, 1).unwrap();
    assert_eq!(same.decisions, g.train.decisions);
    assert_eq!(same.signals, g.train.signals);
    assert!(add_noise(&g.train, -0.1, 1).is_err());
}

#[test]
fn noise_has_the_requested_variance() {
    // 2500 rows x 4 coordinates = 10^4 entries.
    let g = l1_data(2500, 1);
    let std = 0.2;
    let noisy = add_noise(&g.train, std, 9).unwrap();
    assert_eq!(noisy.signals, g.train.signals);
    assert_eq!(noisy.meta.noise_std, std);
    assert!(noisy.oracle.is_some());
    let d: Vec<f64> = noisy
        .decisions
        .iter()
        .flatten()
        .zip(g.train.decisions.iter().flatten())
        .map(|(a, b)| a - b)
        .collect();
    assert_eq!(d.len(), 10_000);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    assert!((var / (std * std) - 1.0).abs() < 0.05, "variance {var}");
    // Same seed, same noise.
    assert_eq!(add_noise(&g.train, std, 9).unwrap().decisions, noisy.decisions);
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = l1_data(40, 2);
    let noisy = add_noise(&g.train, 0.3, 4).unwrap();
    let path = dir.path().join("train.csv");
    write_dataset(&noisy, Some(&g.obj), None, &path).unwrap();
    assert!(sidecar_path(&path).exists());
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.data.signals, noisy.signals);
    assert_eq!(back.data.decisions, noisy.decisions);
    assert_eq!(back.data.meta, noisy.meta);
    assert_eq!(back.objective, Some(g.obj.clone()));
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("s_1,s_2,s_3,s_4,x_1,x_2,x_3,x_4\n"));
    // The rebuilt oracle scores the clean decisions as optimal.
    let oracle = back.data.oracle.as_ref().unwrap();
    for (s, x) in g.train.signals.iter().zip(&g.train.decisions).take(5) {
        let t = true_losses(oracle.as_ref(), &NormSpec::default(), x, s, &SolveOptions::default()).unwrap();
        assert!(t.pred < 1e-8 && t.sub < 1e-8);
    }
}

#[test]
fn network_datasets_keep_their_model() {
    let dir = tempfile::tempdir().unwrap();
    let g = GeneratorRegistry::with_defaults()
        .get("power5")
        .unwrap()
        .generate(&GeneratorParams::default(), 5, 5, 0)
        .unwrap();
    let path = dir.path().join("p5.csv");
    write_dataset(&g.train, Some(&g.obj), g.network.as_ref(), &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.network, g.network);
    assert_eq!(back.data.decisions, g.train.decisions);
}

#[test]
fn every_preset_is_valid() {
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        assert_eq!(cfg.name, name);
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    assert!(preset("nope").is_err());
}

#[test]
fn config_hash_tracks_content() {
    let a = preset("g1_convex").unwrap();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    b.generator.n_train = 101;
    assert_ne!(a.hash(), b.hash());
    let json = serde_json::to_string(&a).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.hash(), a.hash());
}

#[test]
fn identical_configs_give_identical_reports() {
    let mut cfg = preset("toy").unwrap();
    cfg.settings.train.max_iters = 5;
    cfg.seeds = vec![0, 1];
    cfg.generator.n_train = 20;
    cfg.generator.n_test = 20;
    let dir = tempfile::tempdir().unwrap();
    let mut a = run_experiment(&cfg, Some(dir.path())).unwrap();
    let mut b = run_experiment(&cfg, None).unwrap();
    a.strip_timing();
    b.strip_timing();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![0, 1]);
    for f in [
        "report.json",
        "metrics.csv",
        "seed_0_trajectory.csv",
        "seed_1_model.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn stage_failures_give_a_partial_report() {
    let mut cfg = preset("g1_convex").unwrap();
    // The MILP trainer needs a simplex; an L1 ball fails at training time.
    cfg.trainer = "milp".into();
    let rep = run_experiment(&cfg, None).unwrap();
    assert!(rep.has_errors());
    assert!(rep.seeds[0].error.as_ref().unwrap().contains("simplex"));
    assert!(rep.seeds[0].eval_report.is_none());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_invfeas"))
}

#[test]
fn cli_pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = cli().arg("list").output().unwrap();
    assert!(ok.status.success());

    let bad = cli().args(["experiment", "--preset", "nope"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = cli()
        .args(["experiment", "--preset", "toy", "--trainer", "nope"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let data_dir = d.join("data");
    let out = cli()
        .args(["generate", "--preset", "g1_convex", "--seed", "3", "--out-dir"])
        .arg(&data_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train_csv = data_dir.join("seed_3_train.csv");
    let test_csv = data_dir.join("seed_3_test.csv");
    assert!(train_csv.exists() && test_csv.exists());

    let model_dir = d.join("model");
    let out = cli()
        .args(["train", "--preset", "g1_convex", "--data"])
        .arg(&train_csv)
        .arg("--out-dir")
        .arg(&model_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = cli()
        .args(["evaluate", "--preset", "g1_convex", "--data"])
        .arg(&test_csv)
        .arg("--model")
        .arg(model_dir.join("model.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["true_pred"].as_f64().unwrap() < 1e-6);

    let run_dir = d.join("run");
    let out = cli()
        .args(["experiment", "--preset", "g1_convex", "--norm", "l2", "--out-dir"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli().arg("report").arg(&run_dir).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("true_pred"));

    let missing = cli().arg("report").arg(d.join("absent")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn cli_reports_solver_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["experiment", "--preset", "g1_convex", "--trainer", "milp", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("report.json").exists());
}
