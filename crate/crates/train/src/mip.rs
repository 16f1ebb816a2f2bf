//! Mixed-integer programs over binary variables, solved by best-first branch
//! and bound on the continuous relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use invfeas_core::solver::{solve, ConicProgram, ProgramBuilder, SolveOptions, SolveStatus};
use invfeas_core::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// A convex program in which the flagged variables must be 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedIntegerProgram {
    pub program: ConicProgram,
    pub binary: Vec<bool>,
}

impl MixedIntegerProgram {
    /// Clamps every binary variable to `[0, 1]` in the relaxation.
    pub fn new(mut program: ConicProgram, binary: Vec<bool>) -> Result<Self> {
        if binary.len() != program.num_vars {
            return Err(CoreError::Dimension(format!(
                "{} integrality flags for {} variables",
                binary.len(),
                program.num_vars
            )));
        }
        for (j, &is_bin) in binary.iter().enumerate() {
            if is_bin {
                let (lo, hi) = program.var_bounds[j];
                program.var_bounds[j] = (lo.max(0.0), hi.min(1.0));
            }
        }
        Ok(MixedIntegerProgram { program, binary })
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.binary.len()).filter(|&j| self.binary[j]).collect()
    }

    /// The relaxation with some binaries fixed.
    pub fn restricted(&self, fixed: &[(usize, bool)]) -> ConicProgram {
        let mut p = self.program.clone();
        for &(j, v) in fixed {
            let val = if v { 1.0 } else { 0.0 };
            p.var_bounds[j] = (val, val);
        }
        p
    }
}

/// Exact encoding of `w = y * u` for binary `y` and `lo <= u <= hi`:
/// the four McCormick inequalities, which are tight at `y ∈ {0, 1}`.
/// `u` is given as a linear expression over builder variables.
pub fn add_mccormick(b: &mut ProgramBuilder, w: usize, y: usize, u: &[(usize, f64)], lo: f64, hi: f64) {
    // w >= lo*y ; w <= hi*y
    b.add_ge(vec![(w, 1.0), (y, -lo)], 0.0);
    b.add_ge(vec![(w, -1.0), (y, hi)], 0.0);
    // w <= u - lo*(1-y)  <=>  u - w + lo*y >= lo
    let mut t: Vec<(usize, f64)> = u.to_vec();
    t.push((w, -1.0));
    t.push((y, lo));
    b.add_ge(t, lo);
    // w >= u - hi*(1-y)  <=>  w - u + hi*(1-y) >= 0  <=>  w - u - hi*y >= -hi
    let mut t: Vec<(usize, f64)> = u.iter().map(|&(j, a)| (j, -a)).collect();
    t.push((w, 1.0));
    t.push((y, -hi));
    b.add_ge(t, -hi);
}

/// Value of the McCormick inequalities' tightest `w` range for given `y`, `u`.
pub fn mccormick_range(y: f64, u: f64, lo: f64, hi: f64) -> (f64, f64) {
    let lower = (lo * y).max(u - hi * (1.0 - y));
    let upper = (hi * y).min(u - lo * (1.0 - y));
    (lower, upper)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchOptions {
    /// Stop once `(incumbent - bound) <= gap_abs + gap_rel * |incumbent|`.
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub max_nodes: usize,
    /// Wall-clock budget in seconds; `None` for unlimited.
    pub time_limit: Option<f64>,
    /// Distance from 0/1 below which a relaxed binary counts as integral.
    pub int_tol: f64,
    /// At every branched node, also solve with all binaries rounded to the
    /// nearest of 0/1 to find incumbents early.
    pub rounding: bool,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            gap_abs: 1e-6,
            gap_rel: 1e-6,
            max_nodes: 20_000,
            time_limit: None,
            int_tol: 1e-6,
            rounding: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    Infeasible,
    /// Node or time budget exhausted; best solution and bound are reported.
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub wall_time_s: f64,
}

impl MipSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound).max(0.0)
    }
}

struct Node {
    bound: f64,
    id: usize,
    fixed: Vec<(usize, bool)>,
    relaxed: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: the smallest bound first, older nodes first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn relax(program: &ConicProgram, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>> {
    let sol = solve(program, opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(Some((sol.objective_value, sol.primal))),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(CoreError::InvalidProgram(
            "mixed-integer relaxation is unbounded".into(),
        )),
        other => Err(CoreError::Solver(format!("relaxation ended with status {other:?}"))),
    }
}

/// Best-first branch and bound, branching on the most fractional binary
/// (lowest index on ties). An optional incumbent (a full variable vector and
/// its objective) seeds pruning.
pub fn branch_and_bound(
    mip: &MixedIntegerProgram,
    opts: &SolveOptions,
    bopts: &BranchOptions,
    incumbent: Option<(Vec<f64>, f64)>,
) -> Result<MipSolution> {
    let started = Instant::now();
    let bins = mip.binaries();
    let mut best: Option<(Vec<f64>, f64)> = incumbent;
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut nodes = 0usize;
    // Smallest bound among subtrees dropped because they cannot beat the
    // incumbent by more than the gap.
    let mut pruned = f64::INFINITY;

    let close_enough = |inc: f64, bound: f64| inc - bound <= bopts.gap_abs + bopts.gap_rel * inc.abs();

    if let Some((root_val, root_x)) = relax(&mip.program, opts)? {
        nodes += 1;
        heap.push(Node {
            bound: root_val,
            id: next_id,
            fixed: Vec::new(),
            relaxed: root_x,
        });
        next_id += 1;
    }

    let mut exhausted = false;
    while let Some(node) = heap.pop() {
        if let Some((_, inc)) = &best {
            if close_enough(*inc, node.bound) {
                pruned = pruned.min(node.bound);
                break;
            }
        }
        let over_time = bopts.time_limit.is_some_and(|t| started.elapsed().as_secs_f64() > t);
        if nodes >= bopts.max_nodes || over_time {
            exhausted = true;
            heap.push(node);
            break;
        }
        // Most fractional free binary.
        let fixed_set: Vec<usize> = node.fixed.iter().map(|f| f.0).collect();
        let mut pick: Option<(usize, f64)> = None;
        for &j in &bins {
            if fixed_set.contains(&j) {
                continue;
            }
            let v = node.relaxed[j];
            let frac = (v - v.round()).abs();
            if frac > bopts.int_tol && pick.is_none_or(|(_, f)| frac > f + 1e-12) {
                pick = Some((j, frac));
            }
        }
        let Some((j, _)) = pick else {
            // Integral relaxation: polish with every binary fixed.
            let mut fixed = node.fixed.clone();
            for &k in &bins {
                if !fixed_set.contains(&k) {
                    fixed.push((k, node.relaxed[k] > 0.5));
                }
            }
            if let Some((val, x)) = relax(&mip.restricted(&fixed), opts)? {
                nodes += 1;
                if best.as_ref().is_none_or(|(_, inc)| val < *inc) {
                    best = Some((x, val));
                }
            }
            continue;
        };
        if bopts.rounding {
            let rounded: Vec<(usize, bool)> = bins.iter().map(|&k| (k, node.relaxed[k] > 0.5)).collect();
            if let Some((val, x)) = relax(&mip.restricted(&rounded), opts)? {
                nodes += 1;
                if best.as_ref().is_none_or(|(_, inc)| val < *inc) {
                    best = Some((x, val));
                }
            }
            if best.as_ref().is_some_and(|(_, inc)| close_enough(*inc, node.bound)) {
                pruned = pruned.min(node.bound);
                continue;
            }
        }
        for v in [false, true] {
            let mut fixed = node.fixed.clone();
            fixed.push((j, v));
            if let Some((val, x)) = relax(&mip.restricted(&fixed), opts)? {
                nodes += 1;
                if best.as_ref().is_some_and(|(_, inc)| close_enough(*inc, val)) {
                    pruned = pruned.min(val);
                    continue;
                }
                heap.push(Node {
                    bound: val,
                    id: next_id,
                    fixed,
                    relaxed: x,
                });
                next_id += 1;
            }
        }
    }
    let open_bound = heap.iter().map(|n| n.bound).fold(pruned, f64::min);
    let wall = started.elapsed().as_secs_f64();
    let status = |found: bool| match (exhausted, found) {
        (true, _) => MipStatus::Budget,
        (false, true) => MipStatus::Optimal,
        (false, false) => MipStatus::Infeasible,
    };
    Ok(match best {
        None => MipSolution {
            status: status(false),
            x: Vec::new(),
            objective: f64::INFINITY,
            bound: open_bound,
            nodes,
            wall_time_s: wall,
        },
        Some((x, val)) => MipSolution {
            status: status(true),
            x,
            objective: val,
            bound: open_bound.min(val),
            nodes,
            wall_time_s: wall,
        },
    })
}
