use invfeas_core::geometry::Cone;
use invfeas_core::solver::{dump_program, solve, ConicProgram, ProgramBuilder, Row, SolveOptions, SolveStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

#[test]
fn one_dimensional_lp_and_its_dual() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var();
    b.add_cost(x, 1.0);
    b.add_ge(vec![(x, 1.0)], 1.0);
    let sol = solve(&b.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal[0] - 1.0).abs() < 1e-7);
    assert!((sol.duals[0][0] - 1.0).abs() < 1e-7);

    // Same program through a variable bound.
    let mut b = ProgramBuilder::new();
    let x = b.add_var();
    b.add_cost(x, 1.0);
    b.set_lower(x, 1.0);
    let sol = solve(&b.build(), &opts()).unwrap();
    assert!((sol.primal[0] - 1.0).abs() < 1e-7);
    assert!((sol.bound_duals[0].0 - 1.0).abs() < 1e-7);
}

fn simplex_rows(vars: std::ops::Range<usize>) -> (Vec<Row>, Row) {
    let nonneg = vars.clone().map(|j| Row::new(vec![(j, 1.0)], 0.0)).collect();
    let sum = Row::new(vars.map(|j| (j, 1.0)).collect(), 1.0);
    (nonneg, sum)
}

#[test]
fn vertex_argmin_over_simplex() {
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(3);
    for (j, c) in x.clone().zip([3.0, 1.0, 2.0]) {
        b.add_cost(j, c);
    }
    let (nonneg, sum) = simplex_rows(x);
    b.add_block(Cone::nonneg(3), nonneg);
    b.add_block(Cone::zero(1), vec![sum]);
    let sol = solve(&b.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    for (got, want) in sol.primal.iter().zip([0.0, 1.0, 0.0]) {
        assert!((got - want).abs() < 1e-7);
    }
    assert!((sol.objective_value - 1.0).abs() < 1e-7);
}

#[test]
fn projection_qp_matches_grid_search() {
    // min ||x - (2, 0)||^2 over the 2-simplex.
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(2);
    for (j, t) in x.clone().zip([2.0, 0.0]) {
        b.add_square_cost(j, 1.0);
        b.add_cost(j, -2.0 * t);
        b.add_offset(t * t);
    }
    let (nonneg, sum) = simplex_rows(x);
    b.add_block(Cone::nonneg(2), nonneg);
    b.add_block(Cone::zero(1), vec![sum]);
    let sol = solve(&b.build(), &opts()).unwrap();

    // Oracle: grid over x1 ∈ [0, 1] with x2 = 1 - x1, step 1e-4.
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=10_000 {
        let x1 = k as f64 * 1e-4;
        let v = (x1 - 2.0).powi(2) + (1.0 - x1).powi(2);
        if v < best.0 {
            best = (v, x1);
        }
    }
    assert!((sol.objective_value - best.0).abs() < 1e-6);
    assert!((sol.primal[0] - best.1).abs() < 1e-4);
    assert!((sol.objective_value - 1.0).abs() < 1e-7);
}

#[test]
fn second_order_epigraph_gives_euclidean_norm() {
    let a = [3.0, -4.0, 12.0];
    let mut b = ProgramBuilder::new();
    let t = b.add_var();
    let x = b.add_vars(3);
    b.add_cost(t, 1.0);
    let mut rows = vec![Row::new(vec![(t, 1.0)], 0.0)];
    for (j, aj) in x.clone().zip(a) {
        b.add_eq(vec![(j, 1.0)], aj);
        rows.push(Row::new(vec![(j, 1.0)], 0.0));
    }
    b.add_block(Cone::second_order(4), rows);
    let sol = solve(&b.build(), &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective_value - 13.0).abs() < 1e-6);
}

#[test]
fn infeasible_and_unbounded_are_statuses() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var();
    b.add_cost(x, 1.0);
    b.add_ge(vec![(x, 1.0)], 1.0);
    b.add_ge(vec![(x, -1.0)], 0.0);
    assert_eq!(solve(&b.build(), &opts()).unwrap().status, SolveStatus::Infeasible);

    let mut b = ProgramBuilder::new();
    let x = b.add_var();
    let y = b.add_var();
    b.add_cost(x, 1.0);
    b.add_ge(vec![(y, 1.0)], 0.0);
    assert_eq!(solve(&b.build(), &opts()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn malformed_programs_are_rejected() {
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(2);
    b.add_product_cost(x.start, x.start + 1, 1.0);
    assert!(solve(&b.build(), &opts()).is_err(), "indefinite quadratic");

    let prog = ConicProgram {
        num_vars: 1,
        linear: vec![0.0],
        quadratic: vec![],
        offset: 0.0,
        blocks: vec![invfeas_core::solver::ConstraintBlock {
            cone: Cone::nonneg(2),
            rows: vec![Row::new(vec![(0, 1.0)], 0.0)],
        }],
        var_bounds: vec![(f64::NEG_INFINITY, f64::INFINITY)],
    };
    assert!(solve(&prog, &opts()).is_err(), "cone dimension mismatch");
}

/// Random bounded LP `min c'x  s.t.  G x >= h, -2 <= x <= 2` with the rows
/// returned explicitly for the enumeration oracle.
fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<f64>, DMatrix<f64>, DVector<f64>) {
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut g = DMatrix::zeros(m + 2 * n, n);
    let mut h = DVector::zeros(m + 2 * n);
    for i in 0..m {
        for j in 0..n {
            g[(i, j)] = rng.gen_range(-1.0..1.0);
        }
        // keep the origin strictly feasible
        h[i] = -rng.gen_range(0.1..1.0);
    }
    for j in 0..n {
        g[(m + 2 * j, j)] = 1.0;
        h[m + 2 * j] = -2.0;
        g[(m + 2 * j + 1, j)] = -1.0;
        h[m + 2 * j + 1] = -2.0;
    }
    (c, g, h)
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Brute force: the minimum over all basic feasible points.
fn vertex_enumeration(c: &[f64], g: &DMatrix<f64>, h: &DVector<f64>) -> f64 {
    let n = c.len();
    let mut best = f64::INFINITY;
    for active in combinations(g.nrows(), n) {
        let sub = DMatrix::from_fn(n, n, |i, j| g[(active[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| h[active[i]]);
        let Some(x) = sub.clone().lu().solve(&rhs) else {
            continue;
        };
        if sub.determinant().abs() < 1e-10 {
            continue;
        }
        if (g * &x - h).iter().all(|&r| r >= -1e-9) {
            best = best.min(c.iter().zip(x.iter()).map(|(a, b)| a * b).sum());
        }
    }
    best
}

fn lp_program(c: &[f64], g: &DMatrix<f64>, h: &DVector<f64>) -> ConicProgram {
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(c.len());
    for (j, cj) in x.clone().zip(c) {
        b.add_cost(j, *cj);
    }
    let rows = (0..g.nrows())
        .map(|i| Row::new(x.clone().map(|j| (j, g[(i, j)])).collect(), h[i]))
        .collect();
    b.add_block(Cone::nonneg(g.nrows()), rows);
    b.build()
}

#[test]
fn lp_optimum_matches_vertex_enumeration_and_weak_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..40 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(0..=12 - 2 * n);
        let (c, g, h) = random_lp(&mut rng, n, m);
        let prog = lp_program(&c, &g, &h);
        let sol = solve(&prog, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        let oracle = vertex_enumeration(&c, &g, &h);
        assert!(
            (sol.objective_value - oracle).abs() < 1e-6,
            "trial {trial}: {} vs {oracle}",
            sol.objective_value
        );
        let cert = sol.certificates.unwrap();
        assert!(cert.dual_objective <= cert.primal_objective + 1e-6);
        assert!(sol.duals[0].iter().all(|&l| l >= -1e-7));
    }
}

#[test]
fn concurrent_solves_match_sequential_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let programs: Vec<ConicProgram> = (0..16)
        .map(|_| {
            let (c, g, h) = random_lp(&mut rng, 3, 5);
            lp_program(&c, &g, &h)
        })
        .collect();
    let seq: Vec<Vec<f64>> = programs.iter().map(|p| solve(p, &opts()).unwrap().primal).collect();
    let par: Vec<Vec<f64>> = programs.par_iter().map(|p| solve(p, &opts()).unwrap().primal).collect();
    for (a, b) in seq.iter().zip(&par) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn dump_lists_every_block() {
    let mut b = ProgramBuilder::new();
    let x = b.add_vars(2);
    b.add_cost(x.start, 1.0);
    b.set_bounds(x.start, -1.0, 1.0);
    b.add_square_cost(x.start + 1, 0.5);
    b.add_block(
        Cone::second_order(2),
        vec![Row::new(vec![(0, 1.0)], 0.0), Row::new(vec![(1, 1.0)], 0.0)],
    );
    b.add_eq(vec![(0, 1.0), (1, 1.0)], 0.25);
    let text = dump_program(&b.build());
    assert!(text.starts_with("vars 2\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("block ")).count(), 2);
    assert!(text.contains("block second_order 2"));
    assert!(text.contains("quad 1 1"));
    assert!(text.contains("bound 0"));
}
