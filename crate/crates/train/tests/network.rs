use invfeas_core::dataset::{DatasetMeta, IODataset};
use invfeas_core::hypothesis::complete_graph_candidates;
use invfeas_core::losses::{evaluate_model, TrueProblemOracle};
use invfeas_core::norms::{NormKind, NormSpec, PairNorm};
use invfeas_core::solver::SolveOptions;
use invfeas_train::mip::MipStatus;
use invfeas_train::network::{
    network_backend, train_network, BranchAndBound, Enumeration, NetworkModel, NetworkTrainConfig,
};
use invfeas_train::LossKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq() -> NormSpec {
    NormSpec {
        gamma: NormKind::L2Squared,
        pair: PairNorm::Separable,
    }
}

/// Path 0 - 1 - 2 - 3 with generators at 0 and 3, all six node pairs as
/// candidates. Signals: two costs then four demands.
fn four_node() -> NetworkModel {
    let candidates = complete_graph_candidates(4);
    let selected = candidates.iter().map(|&(u, v)| v == u + 1).collect();
    NetworkModel {
        nodes: 4,
        candidates,
        selected,
        generator_nodes: vec![0, 3],
        generator_capacity: vec![3.0, 3.0],
        line_capacity: 1.2,
        cost_signals: vec![0, 1],
        demand_signals: vec![2, 3, 4, 5],
    }
}

fn sample(net: &NetworkModel, n_points: usize, seed: u64) -> IODataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolveOptions::default();
    let mut signals = Vec::new();
    let mut decisions = Vec::new();
    while signals.len() < n_points {
        let mut s: Vec<f64> = (0..net.num_generators()).map(|_| rng.gen_range(0.2..2.0)).collect();
        s.extend((0..net.nodes).map(|_| rng.gen_range(0.1..1.0)));
        let sol = net.solve(&s, &opts).unwrap();
        signals.push(s);
        decisions.push(sol.x);
    }
    IODataset::new(signals, decisions, DatasetMeta::default()).unwrap()
}

#[test]
fn oracle_decisions_balance_demand() {
    let net = four_node();
    let data = sample(&net, 15, 1);
    for (s, x) in data.signals.iter().zip(&data.decisions) {
        let total: f64 = net.demand(s).unwrap().iter().sum();
        assert!((x.iter().sum::<f64>() - total).abs() < 1e-6);
        assert!(x.iter().all(|&v| (-1e-7..=3.0 + 1e-7).contains(&v)));
    }
}

#[test]
fn two_nodes_single_sample_selects_the_line() {
    let net = NetworkModel {
        nodes: 2,
        candidates: vec![(0, 1)],
        selected: vec![true],
        generator_nodes: vec![0],
        generator_capacity: vec![5.0],
        line_capacity: 2.0,
        cost_signals: vec![0],
        demand_signals: vec![1, 2],
    };
    let data = IODataset::new(vec![vec![1.0, 0.0, 1.5]], vec![vec![1.5]], DatasetMeta::default()).unwrap();
    let cfg = NetworkTrainConfig::default();
    let opts = SolveOptions::default();
    for backend in [
        network_backend("enumeration").unwrap(),
        network_backend("branch_and_bound").unwrap(),
    ] {
        let fit = train_network(
            &data,
            &net.with_selected(vec![false]),
            LossKind::Predictability,
            &sq(),
            backend.as_ref(),
            &cfg,
            &opts,
        )
        .unwrap();
        assert_eq!(fit.model.selected, vec![true]);
        assert!(fit.train_loss < 1e-8, "{}", fit.train_loss);
    }
}

#[test]
fn branch_and_bound_matches_enumeration_and_reproduces_data() {
    let truth = four_node();
    let data = sample(&truth, 25, 7);
    let cfg = NetworkTrainConfig::default();
    let opts = SolveOptions::default();
    for loss in [LossKind::Predictability, LossKind::Suboptimality] {
        let en = train_network(&data, &truth, loss, &sq(), &Enumeration, &cfg, &opts).unwrap();
        let bb = train_network(&data, &truth, loss, &sq(), &BranchAndBound, &cfg, &opts).unwrap();
        assert_eq!(bb.status, MipStatus::Optimal);
        assert!(
            (en.train_loss - bb.train_loss).abs() < 1e-6,
            "{loss:?}: enum {} bnb {}",
            en.train_loss,
            bb.train_loss
        );
        assert!(bb.train_loss < 1e-6, "{loss:?}: {}", bb.train_loss);
        assert!(bb.model.generators_reach_all_nodes());

        // The recovered network, solved forward, returns the observations.
        let report = evaluate_model(&bb.model, &sq(), &data, Some(&truth), &opts).unwrap();
        assert_eq!(report.n_failed, 0);
        assert!(report.est_pred < 1e-6 && report.est_sub < 1e-6, "{report:?}");
        for (s, x) in data.signals.iter().zip(&data.decisions) {
            let xs = bb.model.solve(s, &opts).unwrap().x;
            let err = xs.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "recovered {xs:?} observed {x:?}");
        }
    }
}

#[test]
fn l1_objective_also_runs_as_a_linear_program() {
    let truth = four_node();
    let data = sample(&truth, 10, 3);
    let norm = NormSpec {
        gamma: NormKind::L1,
        pair: PairNorm::Separable,
    };
    let fit = train_network(
        &data,
        &truth,
        LossKind::Predictability,
        &norm,
        &BranchAndBound,
        &NetworkTrainConfig::default(),
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(fit.train_loss < 1e-6);
}

#[test]
fn exports_list_every_candidate() {
    let net = four_node();
    let edges = net.edge_list();
    let arr = edges.as_array().unwrap();
    assert_eq!(arr.len(), 6);
    assert_eq!(arr.iter().filter(|e| e["exists"] == true).count(), 3);
    let dot = net.to_dot();
    assert!(dot.starts_with("graph network {"));
    assert_eq!(dot.matches(" -- ").count(), 3);
    assert!(dot.contains("0 [shape=box]") && dot.contains("1 [shape=ellipse]"));
}

#[test]
fn enumeration_refuses_large_candidate_sets() {
    let mut net = four_node();
    let data = sample(&net, 2, 5);
    net.candidates = complete_graph_candidates(4);
    let cfg = NetworkTrainConfig {
        max_configurations: 32,
        ..NetworkTrainConfig::default()
    };
    assert!(train_network(
        &data,
        &net,
        LossKind::Predictability,
        &sq(),
        &Enumeration,
        &cfg,
        &SolveOptions::default()
    )
    .is_err());
}
