//! Binary-simplex hypothesis: `z ∈ {0,1}^p`, `e'z = 1`, so each recovered
//! decision is one column of `A(s)` shifted by `b(s)`. Products `A(s) z` are
//! linearized with McCormick inequalities under the box `|A_k| <= M`.
//!
//! The optimal value of the recovered problem is `min_j c'A(s)_j + c'b(s)`,
//! encoded with a scalar `lambda_i <= c_i'A(s_i)_j` for every column `j` and
//! `c_i'(x_i + gamma_i - b(s_i)) <= lambda_i`.

use std::ops::Range;
use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::linalg::dot;
use invfeas_core::norms::{add_norm_penalty, NormSpec, PairNorm};
use invfeas_core::solver::{solve, ProgramBuilder, SolveOptions, SolveStatus};
use invfeas_core::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{LossKind, Termination, TrainReport};
use crate::mip::{add_mccormick, branch_and_bound, BranchOptions, MipStatus, MixedIntegerProgram};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpSimplexConfig {
    pub p: usize,
    /// Entry bound on every trainable `A_k`.
    pub big_m: f64,
    pub branch: BranchOptions,
    /// Alternating assignment/refit rounds of the warm-start heuristic.
    pub heuristic_rounds: usize,
    /// Number of clustering seeds for the warm start.
    pub restarts: usize,
}

impl Default for MilpSimplexConfig {
    fn default() -> Self {
        MilpSimplexConfig {
            p: 5,
            big_m: 10.0,
            branch: BranchOptions::default(),
            heuristic_rounds: 20,
            restarts: 4,
        }
    }
}

struct Layout {
    a_vars: Vec<Option<Range<usize>>>,
    b_vars: Vec<Option<Range<usize>>>,
    /// `z[i][j]` binary variable indices.
    z: Vec<Vec<usize>>,
}

impl Layout {
    // Column-major index of entry (r, j) of an n x p block starting at `start`.
    fn a_index(start: usize, n: usize, r: usize, j: usize) -> usize {
        start + j * n + r
    }
}

fn build(
    data: &IODataset,
    obj: &ObjectiveSpec,
    shape: &HypothesisParams,
    norm: &NormSpec,
    loss: LossKind,
    big_m: f64,
) -> Result<(MixedIntegerProgram, Layout)> {
    let n = shape.n();
    let p = shape.p();
    let big_n = data.len() as f64;
    let mut b = ProgramBuilder::new();
    let a_vars: Vec<Option<Range<usize>>> = shape
        .a_trainable
        .iter()
        .map(|&t| {
            t.then(|| {
                let r = b.add_vars(n * p);
                for j in r.clone() {
                    b.set_bounds(j, -big_m, big_m);
                }
                r
            })
        })
        .collect();
    let b_vars: Vec<Option<Range<usize>>> = shape.b_trainable.iter().map(|&t| t.then(|| b.add_vars(n))).collect();
    let mut zs = Vec::with_capacity(data.len());
    let mut binary_vars = Vec::new();

    for (s, x) in data.signals.iter().zip(&data.decisions) {
        let c = obj.cost(s)?;
        let weights: Vec<f64> = std::iter::once(1.0).chain(s.iter().copied()).collect();
        // A(s)[r, j] as a linear expression plus a constant from frozen terms.
        let mut frozen_a = DMatrix::<f64>::zeros(n, p);
        let mut frozen_b = DVector::<f64>::zeros(n);
        let mut spread = 0.0;
        for (k, w) in weights.iter().enumerate() {
            if a_vars[k].is_none() {
                frozen_a += &shape.a[k] * *w;
            } else {
                spread += w.abs() * big_m;
            }
            if b_vars[k].is_none() {
                frozen_b += &shape.b[k] * *w;
            }
        }
        let expr = |r: usize, j: usize| -> Vec<(usize, f64)> {
            let mut t = Vec::new();
            for (k, w) in weights.iter().enumerate() {
                if let Some(ak) = &a_vars[k] {
                    if *w != 0.0 {
                        t.push((Layout::a_index(ak.start, n, r, j), *w));
                    }
                }
            }
            t
        };

        let z = b.add_vars(p);
        binary_vars.extend(z.clone());
        b.add_eq(z.clone().map(|j| (j, 1.0)).collect(), 1.0);
        let gam = b.add_vars(n);
        let lam = b.add_var();
        let w = b.add_vars(n * p);
        for j in 0..p {
            for r in 0..n {
                // w_rj = z_j * (expr + frozen)
                let u = expr(r, j);
                let off = frozen_a[(r, j)];
                // w = z * expr + off * z
                let wv = w.start + j * n + r;
                if u.is_empty() {
                    b.add_eq(vec![(wv, 1.0), (z.start + j, -off)], 0.0);
                    continue;
                }
                let aux = b.add_var();
                add_mccormick(&mut b, aux, z.start + j, &u, -spread, spread);
                b.add_eq(vec![(wv, 1.0), (aux, -1.0), (z.start + j, -off)], 0.0);
            }
        }
        // x + gamma = sum_j w_j + b(s)
        for r in 0..n {
            let mut terms: Vec<(usize, f64)> = (0..p).map(|j| (w.start + j * n + r, 1.0)).collect();
            terms.push((gam.start + r, -1.0));
            for (k, wk) in weights.iter().enumerate() {
                if let Some(bk) = &b_vars[k] {
                    if *wk != 0.0 {
                        terms.push((bk.start + r, *wk));
                    }
                }
            }
            b.add_eq(terms, x[r] - frozen_b[r]);
        }
        // lambda <= c'A(s)_j for every column
        for j in 0..p {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            let mut constant = 0.0;
            for r in 0..n {
                if c[r] == 0.0 {
                    continue;
                }
                for (v, a) in expr(r, j) {
                    terms.push((v, a * c[r]));
                }
                constant += c[r] * frozen_a[(r, j)];
            }
            terms.push((lam, -1.0));
            b.add_ge(terms, -constant);
        }
        // lambda + c'b(s) - c'x [- c'gamma | + gamma_o] >= 0
        let mut terms = vec![(lam, 1.0)];
        for (k, wk) in weights.iter().enumerate() {
            if let Some(bk) = &b_vars[k] {
                if *wk != 0.0 {
                    for r in 0..n {
                        if c[r] != 0.0 {
                            terms.push((bk.start + r, wk * c[r]));
                        }
                    }
                }
            }
        }
        match loss {
            LossKind::Predictability => {
                for r in 0..n {
                    if c[r] != 0.0 {
                        terms.push((gam.start + r, -c[r]));
                    }
                }
            }
            LossKind::Suboptimality => {
                let go = b.add_var();
                b.set_lower(go, 0.0);
                b.add_cost(go, 1.0 / big_n);
                terms.push((go, 1.0));
            }
        }
        b.add_ge(terms, dot(&c, x) - dot(&c, frozen_b.as_slice()));
        let gvars: Vec<usize> = gam.collect();
        add_norm_penalty(&mut b, norm.gamma, &gvars, 1.0 / big_n);
        zs.push(z.collect());
    }
    let program = b.build();
    let mut binary = vec![false; program.num_vars];
    for j in binary_vars {
        binary[j] = true;
    }
    Ok((
        MixedIntegerProgram::new(program, binary)?,
        Layout { a_vars, b_vars, z: zs },
    ))
}

fn extract(shape: &HypothesisParams, layout: &Layout, v: &[f64]) -> Result<HypothesisParams> {
    let (n, p) = (shape.n(), shape.p());
    let a = layout
        .a_vars
        .iter()
        .enumerate()
        .map(|(k, r)| match r {
            Some(r) => DMatrix::from_column_slice(n, p, &v[r.clone()]),
            None => shape.a[k].clone(),
        })
        .collect();
    let b = layout
        .b_vars
        .iter()
        .enumerate()
        .map(|(k, r)| match r {
            Some(r) => DVector::from_column_slice(&v[r.clone()]),
            None => shape.b[k].clone(),
        })
        .collect();
    shape.with_a(a)?.with_b(b)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Deterministic k-means on the decisions, seeded by farthest-point picks
/// starting from observation `first`. Returns labels and centers.
pub fn kmeans(xs: &[Vec<f64>], p: usize, rounds: usize, first: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut centers: Vec<Vec<f64>> = vec![xs[first].clone()];
    while centers.len() < p {
        let far = (0..xs.len())
            .map(|i| {
                (
                    i,
                    centers.iter().map(|c| sq_dist(&xs[i], c)).fold(f64::INFINITY, f64::min),
                )
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        centers.push(xs[far].clone());
    }
    let mut labels = vec![usize::MAX; xs.len()];
    for _ in 0..rounds.max(1) {
        let next: Vec<usize> = xs
            .iter()
            .map(|x| {
                (0..centers.len())
                    .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                    .unwrap_or(0)
            })
            .collect();
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = xs.iter().zip(&next).filter(|(_, &l)| l == j).map(|(x, _)| x).collect();
            if !members.is_empty() {
                for (d, cd) in c.iter_mut().enumerate() {
                    *cd = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centers)
}

pub fn cluster_decisions(xs: &[Vec<f64>], p: usize, rounds: usize) -> Vec<usize> {
    kmeans(xs, p, rounds, 0).0
}

/// Index of the cheapest of `points` under cost `c`; ties go to the point
/// nearest `x`, then to `keep` if it is among them.
fn cheapest(c: &[f64], points: &[Vec<f64>], x: &[f64], keep: Option<usize>) -> usize {
    let costs: Vec<f64> = points.iter().map(|v| dot(c, v)).collect();
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..points.len()).filter(|&j| costs[j] <= best + 1e-9).collect();
    if let Some(k) = keep.filter(|k| ties.contains(k)) {
        return k;
    }
    *ties
        .iter()
        .min_by(|&&u, &&v| sq_dist(&points[u], x).total_cmp(&sq_dist(&points[v], x)))
        .expect("at least one point")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpFit {
    pub theta: HypothesisParams,
    pub train_loss: f64,
    pub bound: f64,
    pub status: MipStatus,
    pub nodes: usize,
    /// Loss of the warm start alone.
    pub heuristic_loss: f64,
}

impl MilpFit {
    pub fn gap(&self) -> f64 {
        (self.train_loss - self.bound).max(0.0)
    }
}

/// Global training over the binary simplex hypothesis (within the `A` box
/// and the branch-and-bound budget). `shape` fixes `n`, `p`, `K` and which
/// terms are trainable; its values seed frozen terms only.
pub fn train_milp_simplex(
    data: &IODataset,
    obj: &ObjectiveSpec,
    shape: &HypothesisParams,
    norm: &NormSpec,
    loss: LossKind,
    cfg: &MilpSimplexConfig,
    opts: &SolveOptions,
) -> Result<MilpFit> {
    if data.is_empty() {
        return Err(CoreError::InvalidParameter(
            "training needs at least one observation".into(),
        ));
    }
    if loss == LossKind::Suboptimality && norm.pair != PairNorm::Separable {
        return Err(CoreError::InvalidParameter(
            "the trained suboptimality loss uses the separable pair norm".into(),
        ));
    }
    if shape.p() != cfg.p || shape.n() != data.n() || shape.k() != data.k() {
        return Err(CoreError::Dimension(
            "hypothesis shape does not match data and p".into(),
        ));
    }
    let (mip, layout) = build(data, obj, shape, norm, loss, cfg.big_m)?;
    let p = cfg.p;

    // Warm starts: k-means labels, and each point sent to the cheapest
    // k-means center, from several farthest-point seeds. Each start is
    // refined by refitting and reassigning every point to its cheapest
    // column until the assignment repeats.
    let fix = |assign: &[usize]| -> Vec<(usize, bool)> {
        let mut f = Vec::with_capacity(assign.len() * p);
        for (i, &j) in assign.iter().enumerate() {
            for jj in 0..p {
                f.push((layout.z[i][jj], jj == j));
            }
        }
        f
    };
    let costs: Vec<Vec<f64>> = data.signals.iter().map(|s| obj.cost(s)).collect::<Result<_>>()?;
    let mut firsts: Vec<usize> = Vec::new();
    for i in 0..data.len() {
        if firsts.len() >= cfg.restarts.max(1) {
            break;
        }
        if firsts
            .iter()
            .all(|&f| sq_dist(&data.decisions[f], &data.decisions[i]) > 1e-12)
        {
            firsts.push(i);
        }
    }
    let mut starts: Vec<Vec<usize>> = Vec::new();
    for &f in &firsts {
        let (labels, centers) = kmeans(&data.decisions, p, 50, f);
        let by_cost: Vec<usize> = (0..data.len())
            .map(|i| cheapest(&costs[i], &centers, &data.decisions[i], None))
            .collect();
        for a in [labels, by_cost] {
            if !starts.contains(&a) {
                starts.push(a);
            }
        }
    }
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    for mut assign in starts {
        let mut local: Option<f64> = None;
        for _ in 0..cfg.heuristic_rounds.max(1) {
            let sol = solve(&mip.restricted(&fix(&assign)), opts)?;
            if sol.status != SolveStatus::Optimal || local.is_some_and(|v| sol.objective_value >= v - 1e-12) {
                break;
            }
            local = Some(sol.objective_value);
            if incumbent.as_ref().is_none_or(|(_, v)| sol.objective_value < *v) {
                incumbent = Some((sol.primal.clone(), sol.objective_value));
            }
            let theta = extract(shape, &layout, &sol.primal)?;
            let mut next = Vec::with_capacity(data.len());
            for (i, (s, x)) in data.signals.iter().zip(&data.decisions).enumerate() {
                let a = theta.eval_a(s)?;
                let bs = theta.eval_b(s)?;
                let cols: Vec<Vec<f64>> = (0..p)
                    .map(|j| (0..x.len()).map(|r| a[(r, j)] + bs[r]).collect())
                    .collect();
                next.push(cheapest(&costs[i], &cols, x, Some(assign[i])));
            }
            if next == assign {
                break;
            }
            assign = next;
        }
    }
    let heuristic_loss = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| *v);

    let res = branch_and_bound(&mip, opts, &cfg.branch, incumbent)?;
    if res.x.is_empty() {
        return Err(CoreError::Infeasible(
            "binary simplex training found no feasible hypothesis".into(),
        ));
    }
    Ok(MilpFit {
        theta: extract(shape, &layout, &res.x)?,
        train_loss: res.objective,
        bound: res.bound.max(0.0),
        status: res.status,
        nodes: res.nodes,
        heuristic_loss,
    })
}

pub fn milp_report(fit: &MilpFit, started: Instant) -> TrainReport {
    TrainReport {
        algorithm: "milp_simplex".into(),
        initial_objective: fit.heuristic_loss,
        trajectory: Vec::new(),
        theta: fit.theta.clone(),
        final_loss: fit.train_loss,
        final_slack1: 0.0,
        final_slack2: 0.0,
        termination: if fit.status == MipStatus::Optimal {
            Termination::Exact
        } else {
            Termination::Budget
        },
        wall_time_s: started.elapsed().as_secs_f64(),
        mip_gap: Some(fit.gap()),
        notes: vec![
            format!("lower bound {}", fit.bound),
            format!("nodes {}", fit.nodes),
            format!("warm start loss {}", fit.heuristic_loss),
        ],
    }
}
