//! Transmission networks: generators at known nodes, lines chosen from a
//! fixed candidate list, and recovery of the line set from observed
//! generation by mixed-integer training.
//!
//! The recovered problem is
//! `min c'x  s.t.  P x = A diag(y) f + d,  |f| <= fbar,  0 <= x <= C`,
//! with `P` the generator placement and `A` the signed incidence of the
//! candidate lines. Training encodes optimality of `x_i + gamma_i` by primal
//! feasibility, dual feasibility and weak duality; the products of line
//! binaries with line duals are linearized under `lambda+ + lambda- <= M`.

use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::decision_set::DecisionSet;
use invfeas_core::geometry::Cone;
use invfeas_core::losses::TrueProblemOracle;
use invfeas_core::norms::{add_norm_penalty, NormSpec, PairNorm};
use invfeas_core::solver::{solve, ProgramBuilder, SolveOptions, SolveStatus};
use invfeas_core::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::LossKind;
use crate::mip::{branch_and_bound, BranchOptions, MipSolution, MipStatus, MixedIntegerProgram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub nodes: usize,
    /// Candidate lines `(from, to)`; flow is positive from `from` to `to`.
    pub candidates: Vec<(usize, usize)>,
    /// Which candidates exist.
    pub selected: Vec<bool>,
    /// Node of each generator, in decision order.
    pub generator_nodes: Vec<usize>,
    pub generator_capacity: Vec<f64>,
    pub line_capacity: f64,
    /// Positions of the generator costs in the signal.
    pub cost_signals: Vec<usize>,
    /// Positions of the node demands in the signal.
    pub demand_signals: Vec<usize>,
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidParameter(m));
        if self.selected.len() != self.candidates.len() {
            return bad(format!(
                "{} line flags for {} candidates",
                self.selected.len(),
                self.candidates.len()
            ));
        }
        if self
            .candidates
            .iter()
            .any(|&(u, v)| u == v || u >= self.nodes || v >= self.nodes)
        {
            return bad("every candidate line joins two distinct existing nodes".into());
        }
        if self.generator_nodes.iter().any(|&g| g >= self.nodes) {
            return bad("generator placed at a missing node".into());
        }
        let g = self.generator_nodes.len();
        if self.generator_capacity.len() != g || self.cost_signals.len() != g {
            return bad("one capacity and one cost signal per generator".into());
        }
        if self.demand_signals.len() != self.nodes {
            return bad("one demand signal per node".into());
        }
        if !(self.line_capacity >= 0.0) || self.generator_capacity.iter().any(|c| !(*c >= 0.0)) {
            return bad("capacities must be non-negative".into());
        }
        Ok(())
    }

    pub fn num_generators(&self) -> usize {
        self.generator_nodes.len()
    }

    pub fn num_lines(&self) -> usize {
        self.candidates.len()
    }

    pub fn signal_dim(&self) -> usize {
        self.cost_signals
            .iter()
            .chain(&self.demand_signals)
            .map(|&i| i + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn with_selected(&self, selected: Vec<bool>) -> Self {
        NetworkModel {
            selected,
            ..self.clone()
        }
    }

    /// Signed incidence of all candidates (`+1` at `from`, `-1` at `to`).
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nodes, self.num_lines());
        for (m, &(u, v)) in self.candidates.iter().enumerate() {
            a[(u, m)] = 1.0;
            a[(v, m)] = -1.0;
        }
        a
    }

    pub fn demand(&self, s: &[f64]) -> Result<Vec<f64>> {
        pick(s, &self.demand_signals)
    }

    pub fn edge_list(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.candidates
                .iter()
                .zip(&self.selected)
                .map(|(&(u, v), &on)| json!({"from": u, "to": v, "exists": on}))
                .collect(),
        )
    }

    /// Undirected DOT graph of the selected lines; generator nodes are boxes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph network {\n");
        for r in 0..self.nodes {
            let shape = if self.generator_nodes.contains(&r) {
                "box"
            } else {
                "ellipse"
            };
            out.push_str(&format!("  {r} [shape={shape}];\n"));
        }
        for (&(u, v), &on) in self.candidates.iter().zip(&self.selected) {
            if on {
                out.push_str(&format!("  {u} -- {v};\n"));
            }
        }
        out.push_str("}\n");
        out
    }

    /// True when every node can reach a generator over selected lines.
    pub fn generators_reach_all_nodes(&self) -> bool {
        let mut seen = vec![false; self.nodes];
        let mut stack: Vec<usize> = self.generator_nodes.clone();
        while let Some(r) = stack.pop() {
            if std::mem::replace(&mut seen[r], true) {
                continue;
            }
            for (&(u, v), &on) in self.candidates.iter().zip(&self.selected) {
                if on && (u == r || v == r) {
                    stack.push(if u == r { v } else { u });
                }
            }
        }
        seen.into_iter().all(|b| b)
    }
}

fn pick(s: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter()
        .map(|&i| {
            s.get(i)
                .copied()
                .ok_or_else(|| CoreError::Dimension(format!("signal has no coordinate {i}")))
        })
        .collect()
}

impl TrueProblemOracle for NetworkModel {
    fn cost(&self, s: &[f64]) -> Result<Vec<f64>> {
        pick(s, &self.cost_signals)
    }

    /// Decisions are generator outputs; line flows are auxiliary.
    fn decision_set(&self, s: &[f64]) -> Result<DecisionSet> {
        self.validate()?;
        let d = self.demand(s)?;
        let (r, g, m) = (self.nodes, self.num_generators(), self.num_lines());
        let rows = r + 2 * g + 2 * m;
        let mut gx = DMatrix::zeros(rows, g);
        let mut gw = DMatrix::zeros(rows, m);
        let mut h = DVector::zeros(rows);
        let a = self.incidence();
        for (j, &node) in self.generator_nodes.iter().enumerate() {
            gx[(node, j)] = 1.0;
        }
        for node in 0..r {
            for l in 0..m {
                gw[(node, l)] = -a[(node, l)];
            }
            h[node] = d[node];
        }
        for j in 0..g {
            gx[(r + j, j)] = 1.0;
            gx[(r + g + j, j)] = -1.0;
            h[r + g + j] = -self.generator_capacity[j];
        }
        for l in 0..m {
            let cap = if self.selected[l] { self.line_capacity } else { 0.0 };
            let base = r + 2 * g;
            gw[(base + l, l)] = -1.0;
            h[base + l] = -cap;
            gw[(base + m + l, l)] = 1.0;
            h[base + m + l] = -cap;
        }
        DecisionSet::new(gx, gw, h, vec![Cone::zero(r), Cone::nonneg(2 * g + 2 * m)])
    }

    fn describe(&self) -> serde_json::Value {
        json!({"kind": "network", "model": self})
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkTrainConfig {
    /// Bound on `lambda+_m + lambda-_m` for every line dual.
    pub dual_bound: f64,
    pub branch: BranchOptions,
    /// Enumeration is refused above this many configurations.
    pub max_configurations: u64,
}

impl Default for NetworkTrainConfig {
    fn default() -> Self {
        NetworkTrainConfig {
            dual_bound: 100.0,
            branch: BranchOptions {
                rounding: true,
                ..BranchOptions::default()
            },
            max_configurations: 1 << 20,
        }
    }
}

/// Line-existence MIP with its binary indices.
pub struct NetworkProgram {
    pub mip: MixedIntegerProgram,
    pub lines: Vec<usize>,
}

pub fn build_network_program(
    data: &IODataset,
    net: &NetworkModel,
    loss: LossKind,
    norm: &NormSpec,
    cfg: &NetworkTrainConfig,
) -> Result<NetworkProgram> {
    net.validate()?;
    if data.is_empty() {
        return Err(CoreError::InvalidParameter(
            "training needs at least one observation".into(),
        ));
    }
    if data.n() != net.num_generators() {
        return Err(CoreError::Dimension(format!(
            "decisions have {} entries for {} generators",
            data.n(),
            net.num_generators()
        )));
    }
    if loss == LossKind::Suboptimality && norm.pair != PairNorm::Separable {
        return Err(CoreError::InvalidParameter(
            "the trained suboptimality loss uses the separable pair norm".into(),
        ));
    }
    let (r, g, m) = (net.nodes, net.num_generators(), net.num_lines());
    let a = net.incidence();
    let fbar = net.line_capacity;
    let big_m = cfg.dual_bound;
    let weight = 1.0 / data.len() as f64;

    let mut b = ProgramBuilder::new();
    let y = b.add_vars(m);
    for (s, x) in data.signals.iter().zip(&data.decisions) {
        let c = net.cost(s)?;
        let d = net.demand(s)?;
        let gam = b.add_vars(g);
        let f = b.add_vars(m);
        let nu = b.add_vars(r);
        let blo = b.add_vars(g);
        let bhi = b.add_vars(g);
        let lp = b.add_vars(m);
        let lm = b.add_vars(m);
        let rho = b.add_vars(m);
        for j in blo
            .clone()
            .chain(bhi.clone())
            .chain(lp.clone())
            .chain(lm.clone())
            .chain(rho.clone())
        {
            b.set_lower(j, 0.0);
        }
        // P (x + gamma) - A f = d
        for node in 0..r {
            let mut terms: Vec<(usize, f64)> = (0..m)
                .filter(|&l| a[(node, l)] != 0.0)
                .map(|l| (f.start + l, -a[(node, l)]))
                .collect();
            let mut rhs = d[node];
            for (j, &gn) in net.generator_nodes.iter().enumerate() {
                if gn == node {
                    terms.push((gam.start + j, 1.0));
                    rhs -= x[j];
                }
            }
            b.add_eq(terms, rhs);
        }
        // 0 <= x + gamma <= C
        for j in 0..g {
            b.add_ge(vec![(gam.start + j, 1.0)], -x[j]);
            b.add_ge(vec![(gam.start + j, -1.0)], x[j] - net.generator_capacity[j]);
        }
        for l in 0..m {
            // |f_l| <= fbar y_l
            b.add_ge(vec![(y.start + l, fbar), (f.start + l, -1.0)], 0.0);
            b.add_ge(vec![(y.start + l, fbar), (f.start + l, 1.0)], 0.0);
            // A' nu + lambda+ - lambda- = 0
            let mut terms: Vec<(usize, f64)> = (0..r)
                .filter(|&n| a[(n, l)] != 0.0)
                .map(|n| (nu.start + n, a[(n, l)]))
                .collect();
            terms.push((lp.start + l, 1.0));
            terms.push((lm.start + l, -1.0));
            b.add_eq(terms, 0.0);
            // lambda+ + lambda- <= M
            b.add_ge(vec![(lp.start + l, -1.0), (lm.start + l, -1.0)], -big_m);
            // rho >= lambda+ + lambda- - M (1 - y)
            b.add_ge(
                vec![
                    (rho.start + l, 1.0),
                    (lp.start + l, -1.0),
                    (lm.start + l, -1.0),
                    (y.start + l, -big_m),
                ],
                -big_m,
            );
        }
        // c - P' nu - beta_lo + beta_hi = 0
        for (j, &gn) in net.generator_nodes.iter().enumerate() {
            b.add_eq(
                vec![(nu.start + gn, -1.0), (blo.start + j, -1.0), (bhi.start + j, 1.0)],
                -c[j],
            );
        }
        // d'nu - C'beta_hi - fbar sum rho >= c'(x + gamma)   [or c'x - gamma_o]
        let mut terms: Vec<(usize, f64)> = (0..r).filter(|&n| d[n] != 0.0).map(|n| (nu.start + n, d[n])).collect();
        for j in 0..g {
            terms.push((bhi.start + j, -net.generator_capacity[j]));
        }
        for l in 0..m {
            terms.push((rho.start + l, -fbar));
        }
        match loss {
            LossKind::Predictability => {
                for j in 0..g {
                    terms.push((gam.start + j, -c[j]));
                }
            }
            LossKind::Suboptimality => {
                let go = b.add_var();
                b.set_lower(go, 0.0);
                b.add_cost(go, weight);
                terms.push((go, 1.0));
            }
        }
        let cx: f64 = c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();
        b.add_ge(terms, cx);
        let gvars: Vec<usize> = gam.collect();
        add_norm_penalty(&mut b, norm.gamma, &gvars, weight);
    }
    let program = b.build();
    let mut flags = vec![false; program.num_vars];
    for j in y.clone() {
        flags[j] = true;
    }
    Ok(NetworkProgram {
        mip: MixedIntegerProgram::new(program, flags)?,
        lines: y.collect(),
    })
}

/// Solves a line-existence MIP; registered by name.
pub trait NetworkBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, prog: &NetworkProgram, cfg: &NetworkTrainConfig, opts: &SolveOptions) -> Result<MipSolution>;
}

/// One convex solve per line configuration, in parallel; ties go to the
/// lowest configuration index.
pub struct Enumeration;

impl NetworkBackend for Enumeration {
    fn name(&self) -> &'static str {
        "enumeration"
    }

    fn solve(&self, prog: &NetworkProgram, cfg: &NetworkTrainConfig, opts: &SolveOptions) -> Result<MipSolution> {
        let started = Instant::now();
        let m = prog.lines.len();
        if m >= 64 || (1u64 << m) > cfg.max_configurations {
            return Err(CoreError::InvalidParameter(format!(
                "enumeration over 2^{m} line configurations exceeds the limit of {}",
                cfg.max_configurations
            )));
        }
        let total = 1u64 << m;
        let results: Vec<Result<Option<(f64, Vec<f64>)>>> = (0..total)
            .into_par_iter()
            .map(|mask| {
                let fixed: Vec<(usize, bool)> = prog
                    .lines
                    .iter()
                    .enumerate()
                    .map(|(l, &j)| (j, mask >> l & 1 == 1))
                    .collect();
                let sol = solve(&prog.mip.restricted(&fixed), opts)?;
                match sol.status {
                    SolveStatus::Optimal => Ok(Some((sol.objective_value, sol.primal))),
                    SolveStatus::Infeasible => Ok(None),
                    other => Err(CoreError::Solver(format!(
                        "configuration {mask} ended with status {other:?}"
                    ))),
                }
            })
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for r in results {
            if let Some((v, x)) = r? {
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, x));
                }
            }
        }
        let wall = started.elapsed().as_secs_f64();
        Ok(match best {
            Some((v, x)) => MipSolution {
                status: MipStatus::Optimal,
                x,
                objective: v,
                bound: v,
                nodes: total as usize,
                wall_time_s: wall,
            },
            None => MipSolution {
                status: MipStatus::Infeasible,
                x: Vec::new(),
                objective: f64::INFINITY,
                bound: f64::INFINITY,
                nodes: total as usize,
                wall_time_s: wall,
            },
        })
    }
}

pub struct BranchAndBound;

impl NetworkBackend for BranchAndBound {
    fn name(&self) -> &'static str {
        "branch_and_bound"
    }

    fn solve(&self, prog: &NetworkProgram, cfg: &NetworkTrainConfig, opts: &SolveOptions) -> Result<MipSolution> {
        branch_and_bound(&prog.mip, opts, &cfg.branch, None)
    }
}

pub fn network_backend(name: &str) -> Result<Box<dyn NetworkBackend>> {
    match name {
        "enumeration" => Ok(Box::new(Enumeration)),
        "branch_and_bound" | "bnb" => Ok(Box::new(BranchAndBound)),
        other => Err(CoreError::InvalidParameter(format!(
            "unknown network backend `{other}`"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFit {
    pub model: NetworkModel,
    pub train_loss: f64,
    pub bound: f64,
    pub status: MipStatus,
    pub backend: String,
    /// Relaxations solved (branch and bound) or configurations (enumeration).
    pub nodes: usize,
    pub wall_time_s: f64,
}

/// Recovers the line set of `net` (its `selected` flags are ignored).
pub fn train_network(
    data: &IODataset,
    net: &NetworkModel,
    loss: LossKind,
    norm: &NormSpec,
    backend: &dyn NetworkBackend,
    cfg: &NetworkTrainConfig,
    opts: &SolveOptions,
) -> Result<NetworkFit> {
    let prog = build_network_program(data, net, loss, norm, cfg)?;
    let sol = backend.solve(&prog, cfg, opts)?;
    if sol.x.is_empty() {
        return Err(CoreError::Infeasible(
            "no line configuration admits the observations".into(),
        ));
    }
    let selected = prog.lines.iter().map(|&j| sol.x[j] > 0.5).collect();
    Ok(NetworkFit {
        model: net.with_selected(selected),
        train_loss: sol.objective,
        bound: sol.bound,
        status: sol.status,
        backend: backend.name().to_string(),
        nodes: sol.nodes,
        wall_time_s: sol.wall_time_s,
    })
}
