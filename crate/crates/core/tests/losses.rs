use std::sync::Arc;

use invfeas_core::dataset::{DatasetMeta, IODataset};
use invfeas_core::decision_set::DecisionSet;
use invfeas_core::forward::{solve_forward, subopt_gap, ObjectiveSpec};
use invfeas_core::geometry::{make_primitive, Cone, PrimitiveKind, PrimitiveParams, PrimitiveSet};
use invfeas_core::hypothesis::{init_params, HypothesisParams, StructureKind};
use invfeas_core::losses::{evaluate, pred_loss, sub_loss, true_losses, TrueProblemOracle};
use invfeas_core::norms::{NormKind, NormSpec};
use invfeas_core::solver::{SolveOptions, SolveStatus};
use invfeas_core::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn simplex(p: usize) -> PrimitiveSet {
    make_primitive(PrimitiveKind::Simplex, p, &PrimitiveParams::default()).unwrap()
}

/// Two generators, cost `(s, 1 - s)`, recovered set = the unit simplex.
fn example_model() -> (HypothesisParams, PrimitiveSet, ObjectiveSpec) {
    let theta = HypothesisParams::new(
        vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
        vec![DVector::zeros(2), DVector::zeros(2)],
    )
    .unwrap();
    let obj = ObjectiveSpec::Affine {
        c0: vec![0.0, 1.0],
        c: vec![vec![1.0], vec![-1.0]],
    };
    (theta, simplex(2), obj)
}

/// `min s x1 + (1 - s) x2  s.t.  x1 + x2 = 1, x ∈ [0, 2]^2`.
#[derive(Debug)]
struct ToyTruth;

impl TrueProblemOracle for ToyTruth {
    fn cost(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![s[0], 1.0 - s[0]])
    }

    fn decision_set(&self, _s: &[f64]) -> Result<DecisionSet> {
        let gx = DMatrix::from_row_slice(5, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let g = DVector::from_vec(vec![1.0, 0.0, 0.0, -2.0, -2.0]);
        DecisionSet::new(gx, DMatrix::zeros(5, 0), g, vec![Cone::zero(1), Cone::nonneg(4)])
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"kind": "toy"})
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn forward_policy_switches_at_one_half() {
    let (theta, z, obj) = example_model();
    let low = solve_forward(&theta, &z, &obj, &[0.3], &opts()).unwrap();
    assert_eq!(low.status, SolveStatus::Optimal);
    assert!(close(low.x_star[0], 1.0, 1e-7) && close(low.x_star[1], 0.0, 1e-7));
    assert!(close(low.value, 0.3, 1e-8));

    let high = solve_forward(&theta, &z, &obj, &[0.7], &opts()).unwrap();
    assert!(close(high.x_star[0], 0.0, 1e-7) && close(high.x_star[1], 1.0, 1e-7));
    assert!(close(high.value, 0.3, 1e-8));

    // Tie: any point of the simplex is optimal; only the value is unique.
    let tie = solve_forward(&theta, &z, &obj, &[0.5], &opts()).unwrap();
    assert!(close(tie.value, 0.5, 1e-8));
    assert!(z.contains(&tie.z_star, 1e-7).unwrap());
    assert!(close(tie.x_star[0] + tie.x_star[1], 1.0, 1e-8));
}

#[test]
fn suboptimality_gap_examples() {
    let (theta, z, obj) = example_model();
    let fwd = solve_forward(&theta, &z, &obj, &[0.3], &opts()).unwrap();
    assert!(
        subopt_gap(&theta, &z, &obj, &fwd.x_star, &[0.3], &opts())
            .unwrap()
            .abs()
            < 1e-8
    );
    let gap = subopt_gap(&theta, &z, &obj, &[0.0, 1.0], &[0.3], &opts()).unwrap();
    assert!(close(gap, 0.4, 1e-8));
}

#[test]
fn unbounded_recovered_problem_gives_infinite_gap() {
    // Z = R_+ (orthant without the sum constraint), A = 1, c = 1 - 2 = -1.
    let z = PrimitiveSet::from_parts(
        PrimitiveKind::Custom,
        1,
        PrimitiveParams::default(),
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        vec![Cone::nonneg(1)],
        vec![false],
    )
    .unwrap();
    let theta = HypothesisParams::new(vec![DMatrix::from_element(1, 1, 1.0)], vec![DVector::zeros(1)]).unwrap();
    let obj = ObjectiveSpec::Affine {
        c0: vec![-1.0],
        c: vec![vec![]],
    };
    let fwd = solve_forward(&theta, &z, &obj, &[], &opts()).unwrap();
    assert_eq!(fwd.status, SolveStatus::Unbounded);
    assert_eq!(
        subopt_gap(&theta, &z, &obj, &[0.0], &[], &opts()).unwrap(),
        f64::INFINITY
    );
    let norm = NormSpec::new(NormKind::L2);
    assert_eq!(
        pred_loss(&theta, &z, &obj, &norm, &[0.0], &[], &opts()).unwrap().loss,
        f64::INFINITY
    );
}

/// Oracle for the example: the optimal set at s = 0.3 is the vertex (1, 0);
/// enumerate the vertices and project onto the argmin set.
fn vertex_oracle_pred(x: [f64; 2], s: f64) -> f64 {
    let vertices = [[1.0, 0.0], [0.0, 1.0]];
    let cost = |v: &[f64; 2]| s * v[0] + (1.0 - s) * v[1];
    let best = vertices.iter().map(cost).fold(f64::INFINITY, f64::min);
    vertices
        .iter()
        .filter(|v| cost(v) <= best + 1e-12)
        .map(|v| ((x[0] - v[0]).powi(2) + (x[1] - v[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn predictability_loss_examples() {
    let (theta, z, obj) = example_model();
    let norm = NormSpec::new(NormKind::L2);
    let a = pred_loss(&theta, &z, &obj, &norm, &[2.0, 0.0], &[0.3], &opts()).unwrap();
    assert!(close(a.loss, vertex_oracle_pred([2.0, 0.0], 0.3), 1e-6));
    assert!(close(a.loss, 1.0, 1e-6));
    assert!(close(a.gamma[0], -1.0, 1e-6) && close(a.gamma[1], 0.0, 1e-6));

    let b = pred_loss(&theta, &z, &obj, &norm, &[0.0, 1.0], &[0.3], &opts()).unwrap();
    assert!(close(b.loss, vertex_oracle_pred([0.0, 1.0], 0.3), 1e-6));
    assert!(close(b.loss, 2f64.sqrt(), 1e-6));
    assert!(close(b.gamma[0], 1.0, 1e-6) && close(b.gamma[1], -1.0, 1e-6));

    let fwd = solve_forward(&theta, &z, &obj, &[0.3], &opts()).unwrap();
    assert!(
        pred_loss(&theta, &z, &obj, &norm, &fwd.x_star, &[0.3], &opts())
            .unwrap()
            .loss
            < 1e-7
    );
}

#[test]
fn suboptimality_loss_examples() {
    let (theta, z, obj) = example_model();
    let norm = NormSpec::new(NormKind::L2);
    let a = sub_loss(&theta, &z, &obj, &norm, &[0.0, 1.0], &[0.3], &opts()).unwrap();
    assert!(a.gamma_f < 1e-7);
    assert!(close(a.gamma_o, 0.4, 1e-8));
    assert!(close(a.loss, 0.4, 1e-7));

    let b = sub_loss(&theta, &z, &obj, &norm, &[2.0, 0.0], &[0.3], &opts()).unwrap();
    assert!(close(b.gamma_f, 1.0, 1e-6));
    assert!(close(b.gamma_o, 0.3, 1e-8));
    assert!(close(b.loss, 1.3, 1e-6));
}

/// Brute-force projection onto the toy feasible segment `{(t, 1 - t) : t ∈ [0, 1]}`
/// and its optimal subset, on a grid of step 1e-5.
fn toy_grid_losses(x: [f64; 2], s: f64) -> (f64, f64) {
    let cost = |t: f64| s * t + (1.0 - s) * (1.0 - t);
    let steps = 100_000;
    let pts: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let v = pts.iter().map(|&t| cost(t)).fold(f64::INFINITY, f64::min);
    let dist = |t: f64| ((x[0] - t).powi(2) + (x[1] - 1.0 + t).powi(2)).sqrt();
    let gamma_f = pts.iter().map(|&t| dist(t)).fold(f64::INFINITY, f64::min);
    let pred = pts
        .iter()
        .filter(|&&t| cost(t) <= v + 1e-12)
        .map(|&t| dist(t))
        .fold(f64::INFINITY, f64::min);
    let gamma_o = (s * x[0] + (1.0 - s) * x[1] - v).max(0.0);
    (pred, gamma_f + gamma_o)
}

#[test]
fn true_losses_match_grid_oracle() {
    let norm = NormSpec::new(NormKind::L2);
    let t = true_losses(&ToyTruth, &norm, &[1.0, 0.0], &[0.3], &opts()).unwrap();
    assert!(t.pred < 1e-7 && t.sub < 1e-7);

    for x in [[0.0, 1.0], [1.5, -0.5], [0.2, 0.3], [2.0, 2.0]] {
        let t = true_losses(&ToyTruth, &norm, &x, &[0.3], &opts()).unwrap();
        let (pred, sub) = toy_grid_losses(x, 0.3);
        assert!(close(t.pred, pred, 1e-5), "{x:?}: {} vs {pred}", t.pred);
        assert!(close(t.sub, sub, 1e-5), "{x:?}: {} vs {sub}", t.sub);
    }
    let t = true_losses(&ToyTruth, &norm, &[0.0, 1.0], &[0.3], &opts()).unwrap();
    assert!(close(t.pred, 2f64.sqrt(), 1e-6) && close(t.sub, 0.4, 1e-6));
    // Point on the supporting line but past the box: distance to (1, 0).
    let t = true_losses(&ToyTruth, &norm, &[1.5, -0.5], &[0.3], &opts()).unwrap();
    assert!(close(t.sub, 0.5f64.sqrt(), 1e-6));
}

fn random_free_model(seed: u64, n: usize, p: usize) -> (HypothesisParams, PrimitiveSet, ObjectiveSpec) {
    let mut theta = init_params((n, p, 1), StructureKind::Free, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for bk in theta.b.iter_mut() {
        bk.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let obj = ObjectiveSpec::Affine {
        c0: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        c: (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect(),
    };
    (theta, simplex(p), obj)
}

// Zero loss exactly at recovered optima, positive loss after a step of
// length 0.1 that lowers the cost (such points cannot be feasible).
#[test]
fn losses_characterize_recovered_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for norm in [
        NormSpec::new(NormKind::L2),
        NormSpec::new(NormKind::L2Squared),
        NormSpec::new(NormKind::L1),
    ] {
        for trial in 0..20u64 {
            let (theta, z, obj) = random_free_model(trial, 2, 3);
            let s = [rng.gen_range(0.0..1.0)];
            let fwd = solve_forward(&theta, &z, &obj, &s, &opts()).unwrap();
            let x = fwd.x_star.clone();
            let p = pred_loss(&theta, &z, &obj, &norm, &x, &s, &opts()).unwrap();
            let q = sub_loss(&theta, &z, &obj, &norm, &x, &s, &opts()).unwrap();
            assert!(p.loss <= 1e-6 && q.loss <= 1e-6, "trial {trial}: {} {}", p.loss, q.loss);

            let c = obj.cost(&s).unwrap();
            let cn = (c[0] * c[0] + c[1] * c[1]).sqrt();
            let perp = [-c[1] / cn, c[0] / cn];
            let u = rng.gen_range(-1.0..1.0);
            let dir = [-c[0] / cn + u * perp[0], -c[1] / cn + u * perp[1]];
            let dn = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let y = [x[0] + 0.1 * dir[0] / dn, x[1] + 0.1 * dir[1] / dn];
            let p = pred_loss(&theta, &z, &obj, &norm, &y, &s, &opts()).unwrap();
            let q = sub_loss(&theta, &z, &obj, &norm, &y, &s, &opts()).unwrap();
            assert!(p.loss >= 1e-4 && q.loss >= 1e-4, "trial {trial}: {} {}", p.loss, q.loss);
        }
    }
}

#[test]
fn policy_is_feasible_and_picks_the_best_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let norm = NormSpec::new(NormKind::L2);
    for trial in 0..100u64 {
        let (theta, z, obj) = random_free_model(trial, 3, 4);
        let s = [rng.gen_range(0.0..1.0)];
        let fwd = solve_forward(&theta, &z, &obj, &s, &opts()).unwrap();
        let set = DecisionSet::from_hypothesis(&theta, &z, &s).unwrap();
        assert!(set.project(&fwd.x_star, norm.gamma, &opts()).unwrap().distance <= 1e-6);
        let gap = subopt_gap(&theta, &z, &obj, &fwd.x_star, &s, &opts()).unwrap();
        assert!(gap.abs() <= 1e-6);

        let a = theta.eval_a(&s).unwrap();
        let b = theta.eval_b(&s).unwrap();
        let c = DVector::from_vec(obj.cost(&s).unwrap());
        let best = (0..4).map(|j| c.dot(&(a.column(j) + &b))).fold(f64::INFINITY, f64::min);
        assert!(close(fwd.value, best, 1e-7), "trial {trial}");
    }
}

#[test]
fn optimality_slack_grows_along_the_feasible_set() {
    let (theta, z, obj) = example_model();
    let norm = NormSpec::new(NormKind::L2);
    let mut last = -1.0;
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let x = [1.0 - t, t];
        let q = sub_loss(&theta, &z, &obj, &norm, &x, &[0.3], &opts()).unwrap();
        assert!(q.gamma_o >= last - 1e-9);
        last = q.gamma_o;
    }
}

#[test]
fn estimated_and_true_predictability_agree_under_unique_optima() {
    let (theta, z, obj) = example_model();
    let norm = NormSpec::new(NormKind::L2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let s: [f64; 1] = [rng.gen_range(0.0..1.0)];
        if (s[0] - 0.5).abs() < 1e-3 {
            continue;
        }
        let x = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
        // The toy truth has the same optimal vertex as the example model,
        // so the predictability losses coincide.
        let est = pred_loss(&theta, &z, &obj, &norm, &x, &s, &opts()).unwrap().loss;
        let tru = true_losses(&ToyTruth, &norm, &x, &s, &opts()).unwrap().pred;
        assert!(close(est, tru, 1e-6));
    }
}

#[test]
fn evaluation_of_true_model_on_clean_data_is_zero() {
    let (theta, z, obj) = example_model();
    let norm = NormSpec::new(NormKind::L2Squared);
    let signals: Vec<Vec<f64>> = [0.1, 0.2, 0.45, 0.6, 0.9].iter().map(|&s| vec![s]).collect();
    let decisions = signals
        .iter()
        .map(|s| if s[0] < 0.5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        .collect();
    let data = IODataset::new(signals, decisions, DatasetMeta::default())
        .unwrap()
        .with_oracle(Arc::new(ToyTruth));
    let report = evaluate(&theta, &z, &obj, &norm, &data, data.oracle.as_deref(), &opts()).unwrap();
    assert_eq!(report.n_failed, 0);
    assert!(report.max_metric() <= 1e-8, "{report:?}");
    assert!(report.true_pred.is_some());

    let single = data.subset(&[0]);
    let report = evaluate(&theta, &z, &obj, &norm, &single, None, &opts()).unwrap();
    assert!(report.est_pred <= 1e-8 && report.true_pred.is_none());
    assert!(report.csv_row().split(',').count() == 6);
}
