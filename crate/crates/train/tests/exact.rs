use invfeas_core::dataset::{DatasetMeta, IODataset};
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::{make_primitive, PrimitiveKind, PrimitiveParams};
use invfeas_core::hypothesis::{init_params, StructureKind};
use invfeas_core::norms::{NormKind, NormSpec, PairNorm};
use invfeas_core::solver::{solve, ProgramBuilder, SolveOptions, SolveStatus};
use invfeas_train::convex::train_convex_alpha;
use invfeas_train::milp_simplex::{cluster_decisions, train_milp_simplex, MilpSimplexConfig};
use invfeas_train::mip::{
    add_mccormick, branch_and_bound, mccormick_range, BranchOptions, MipStatus, MixedIntegerProgram,
};
use invfeas_train::LossKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l2() -> NormSpec {
    NormSpec {
        gamma: NormKind::L2,
        pair: PairNorm::Separable,
    }
}

/// min c'x over ||x - e||_1 <= h, solved by hand: move h along the largest |c_j|.
fn l1_ball_study(n_points: usize, h: f64, seed: u64) -> (IODataset, ObjectiveSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signals = Vec::new();
    let mut decisions = Vec::new();
    for _ in 0..n_points {
        let c: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let j = if c[0].abs() >= c[1].abs() { 0 } else { 1 };
        let mut x = vec![1.0, 1.0];
        x[j] -= h * c[j].signum();
        signals.push(c);
        decisions.push(x);
    }
    (
        IODataset::new(signals, decisions, DatasetMeta::default()).unwrap(),
        ObjectiveSpec::leading_signals(2),
    )
}

fn simplex_study(n: usize, n_points: usize, seed: u64) -> (IODataset, ObjectiveSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signals = Vec::new();
    let mut decisions = Vec::new();
    for _ in 0..n_points {
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let j = (0..n).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
        let mut x = vec![1.0; n];
        x[j] = 0.0;
        signals.push(c);
        decisions.push(x);
    }
    (
        IODataset::new(signals, decisions, DatasetMeta::default()).unwrap(),
        ObjectiveSpec::leading_signals(n),
    )
}

#[test]
fn mccormick_is_exact_at_binary_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let lo = rng.gen_range(-10.0..0.0);
        let hi = rng.gen_range(0.0..10.0);
        let u = rng.gen_range(lo..=hi);
        for y in [0.0, 1.0] {
            let (a, b) = mccormick_range(y, u, lo, hi);
            assert!(
                (a - y * u).abs() < 1e-12 && (b - y * u).abs() < 1e-12,
                "y={y} u={u} [{a}, {b}]"
            );
        }
    }
}

#[test]
fn mccormick_rows_pin_the_product_in_a_solve() {
    let opts = SolveOptions::default();
    for (y, u) in [(0.0, 3.0), (1.0, -2.5), (1.0, 4.0), (0.0, -4.0)] {
        for sense in [1.0, -1.0] {
            let mut b = ProgramBuilder::new();
            let w = b.add_var();
            let yv = b.add_var();
            let uv = b.add_var();
            b.set_bounds(yv, y, y);
            b.set_bounds(uv, u, u);
            add_mccormick(&mut b, w, yv, &[(uv, 1.0)], -5.0, 5.0);
            b.add_cost(w, sense);
            let sol = solve(&b.build(), &opts).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.primal[w] - y * u).abs() < 1e-6, "w={} y={y} u={u}", sol.primal[w]);
        }
    }
}

/// Facility-style MIQP: binaries open sites at fixed cost, continuous
/// allocations may only use open sites, squared deviation from targets.
fn random_mip(seed: u64, m: usize) -> MixedIntegerProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ProgramBuilder::new();
    let y = b.add_vars(m);
    let x = b.add_vars(m);
    for j in 0..m {
        b.add_cost(y.start + j, rng.gen_range(0.1..1.0));
        b.set_bounds(x.start + j, -2.0, 2.0);
        // |x_j| <= 2 y_j
        b.add_ge(vec![(y.start + j, 2.0), (x.start + j, -1.0)], 0.0);
        b.add_ge(vec![(y.start + j, 2.0), (x.start + j, 1.0)], 0.0);
        let t: f64 = rng.gen_range(-2.0..2.0);
        b.add_square_cost(x.start + j, 1.0);
        b.add_cost(x.start + j, -2.0 * t);
        b.add_offset(t * t);
    }
    b.add_ge(y.clone().map(|j| (j, 1.0)).collect(), 2.0);
    let p = b.build();
    let mut flags = vec![false; p.num_vars];
    for j in y {
        flags[j] = true;
    }
    MixedIntegerProgram::new(p, flags).unwrap()
}

fn enumerate(mip: &MixedIntegerProgram, opts: &SolveOptions) -> f64 {
    let bins = mip.binaries();
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << bins.len()) {
        let fixed: Vec<(usize, bool)> = bins.iter().enumerate().map(|(i, &j)| (j, mask >> i & 1 == 1)).collect();
        let sol = solve(&mip.restricted(&fixed), opts).unwrap();
        if sol.status == SolveStatus::Optimal {
            best = best.min(sol.objective_value);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn branch_and_bound_matches_enumeration(seed in 0u64..10_000) {
        let opts = SolveOptions::default();
        let mip = random_mip(seed, 5);
        let bb = branch_and_bound(&mip, &opts, &BranchOptions::default(), None).unwrap();
        let brute = enumerate(&mip, &opts);
        prop_assert_eq!(bb.status, MipStatus::Optimal);
        prop_assert!((bb.objective - brute).abs() <= 1e-6 * (1.0 + brute.abs()), "bb {} enum {}", bb.objective, brute);
        prop_assert!(bb.bound <= bb.objective + 1e-12);
        for j in mip.binaries() {
            prop_assert!(bb.x[j].min(1.0 - bb.x[j]).abs() < 1e-6);
        }
    }
}

#[test]
fn branch_and_bound_reports_budget_with_a_valid_bound() {
    let opts = SolveOptions::default();
    let mip = random_mip(3, 8);
    let bopts = BranchOptions {
        max_nodes: 3,
        ..BranchOptions::default()
    };
    let bb = branch_and_bound(&mip, &opts, &bopts, None).unwrap();
    let brute = enumerate(&mip, &opts);
    if bb.status == MipStatus::Budget {
        assert!(bb.bound <= brute + 1e-7);
        assert!(bb.objective >= brute - 1e-7);
    } else {
        assert!((bb.objective - brute).abs() < 1e-6);
    }
}

#[test]
fn convex_alpha_recovers_the_l1_ball() {
    let (data, obj) = l1_ball_study(60, 1.0, 3);
    let z = make_primitive(PrimitiveKind::L1Ball, 2, &PrimitiveParams::radius(1.0)).unwrap();
    let fit = train_convex_alpha(
        &data,
        &z,
        &obj,
        &l2(),
        LossKind::Predictability,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(fit.train_loss < 1e-6, "loss {}", fit.train_loss);
    assert!((fit.alpha - 1.0).abs() < 1e-5, "alpha {}", fit.alpha);
    assert!((fit.theta.b[0][0] - 1.0).abs() < 1e-5 && (fit.theta.b[0][1] - 1.0).abs() < 1e-5);
    for bk in &fit.theta.b[1..] {
        assert!(bk.amax() < 1e-5);
    }
}

#[test]
fn convex_alpha_scales_with_radius_and_follows_translation() {
    let z = make_primitive(PrimitiveKind::L1Ball, 2, &PrimitiveParams::radius(1.0)).unwrap();
    let opts = SolveOptions::default();
    let (data, obj) = l1_ball_study(40, 2.5, 11);
    let fit = train_convex_alpha(&data, &z, &obj, &l2(), LossKind::Predictability, &opts).unwrap();
    assert!((fit.alpha - 2.5).abs() < 1e-5, "alpha {}", fit.alpha);

    let shift = [0.7, -1.3];
    let moved: Vec<Vec<f64>> = data
        .decisions
        .iter()
        .map(|x| vec![x[0] + shift[0], x[1] + shift[1]])
        .collect();
    let moved = IODataset::new(data.signals.clone(), moved, DatasetMeta::default()).unwrap();
    let fit2 = train_convex_alpha(&moved, &z, &obj, &l2(), LossKind::Predictability, &opts).unwrap();
    assert!((fit2.alpha - fit.alpha).abs() < 1e-5);
    assert!((fit2.train_loss - fit.train_loss).abs() < 1e-6);
    for r in 0..2 {
        assert!((fit2.theta.b[0][r] - fit.theta.b[0][r] - shift[r]).abs() < 1e-5);
    }
}

#[test]
fn convex_alpha_suboptimality_is_zero_on_noiseless_data() {
    let (data, obj) = l1_ball_study(30, 1.0, 5);
    let z = make_primitive(PrimitiveKind::L1Ball, 2, &PrimitiveParams::radius(1.0)).unwrap();
    let fit = train_convex_alpha(
        &data,
        &z,
        &obj,
        &l2(),
        LossKind::Suboptimality,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(fit.train_loss < 1e-6, "loss {}", fit.train_loss);
}

#[test]
fn clustering_is_deterministic_and_separates_vertices() {
    let xs = vec![
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
    ];
    let a = cluster_decisions(&xs, 3, 10);
    assert_eq!(a, cluster_decisions(&xs, 3, 10));
    assert_eq!(a[0], a[2]);
    assert_eq!(a[1], a[3]);
    assert!(a[0] != a[1] && a[4] != a[0] && a[4] != a[1]);
}

#[test]
fn milp_single_point_fits_exactly() {
    let (data, obj) = simplex_study(3, 1, 1);
    let shape = init_params((3, 3, 3), StructureKind::Free, 0).unwrap().constant_a();
    let cfg = MilpSimplexConfig {
        p: 3,
        ..MilpSimplexConfig::default()
    };
    let fit = train_milp_simplex(
        &data,
        &obj,
        &shape,
        &l2(),
        LossKind::Predictability,
        &cfg,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(fit.train_loss < 1e-6);
    assert_eq!(fit.status, MipStatus::Optimal);
}

#[test]
fn milp_recovers_the_simplex_with_enough_columns() {
    let (data, obj) = simplex_study(3, 25, 4);
    let shape = init_params((3, 3, 3), StructureKind::Free, 0).unwrap().constant_a();
    let cfg = MilpSimplexConfig {
        p: 3,
        ..MilpSimplexConfig::default()
    };
    for loss in [LossKind::Predictability, LossKind::Suboptimality] {
        let fit = train_milp_simplex(&data, &obj, &shape, &l2(), loss, &cfg, &SolveOptions::default()).unwrap();
        assert!(fit.train_loss < 1e-6, "{loss:?} loss {}", fit.train_loss);
        assert_eq!(fit.status, MipStatus::Optimal);
    }
}

#[test]
fn milp_with_too_few_columns_keeps_a_positive_certified_loss() {
    let (data, obj) = simplex_study(3, 12, 9);
    let shape = init_params((3, 2, 3), StructureKind::Free, 0).unwrap().constant_a();
    let cfg = MilpSimplexConfig {
        p: 2,
        ..MilpSimplexConfig::default()
    };
    let fit = train_milp_simplex(
        &data,
        &obj,
        &shape,
        &l2(),
        LossKind::Predictability,
        &cfg,
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(fit.status, MipStatus::Optimal, "gap {}", fit.gap());
    assert!(fit.train_loss > 1e-3, "loss {}", fit.train_loss);
    assert!(fit.bound <= fit.train_loss + 1e-9);
    assert!(fit.train_loss <= fit.heuristic_loss + 1e-9);
}
