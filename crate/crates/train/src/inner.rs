//! The inner convex program: with every `A_k` fixed, choose the `b_k` and the
//! per-point slacks, primitive points and dual certificates jointly.
//!
//! Per point `i` (with `s_i0 = 1` and `Ā` the map padded over lifting
//! variables), predictability:
//!
//! ```text
//! A(s_i) z_i + b(s_i) + gamma_s1 - gamma_i = x_i        (dual: beta_i)
//! H z_i - h ∈ K
//! H'lambda_i - gamma_s2 = Ā(s_i)'c_i                     (dual: mu_i)
//! lambda_i ∈ K*
//! h'lambda_i + c_i'b(s_i) - c_i'(x_i + gamma_i) >= 0
//! ```
//!
//! Suboptimality drops `gamma_s1` from the first row, moves it to the dual
//! row in place of `gamma_s2`, and relaxes the last row with `gamma_o >= 0`:
//! `h'lambda_i + c_i'b(s_i) - c_i'x_i + gamma_o >= 0`. The data term is
//! `(1/N) sum_i ||gamma_i||` plus `(1/N) sum_i gamma_o,i`. The smoothing
//! slacks are absent unless smoothing is on.

use std::ops::Range;

use invfeas_core::dataset::IODataset;
use invfeas_core::decision_set::lifted_map;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::{Cone, ConeKind, PrimitiveSet};
use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::linalg::dot;
use invfeas_core::norms::{add_norm_penalty, norm_value, NormKind, NormSpec, PairNorm};
use invfeas_core::solver::{solve, ConicProgram, ProgramBuilder, Row, SolveOptions, SolveStatus};
use invfeas_core::{CoreError, Result};
use nalgebra::{DMatrix, DVector};

use crate::config::{LossKind, SlackScale, SmoothingParams, TrainConfig};

/// Everything the inner program needs besides the hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSpec {
    pub loss: LossKind,
    pub norm: NormSpec,
    /// `(eps1, eps2)` when smoothed.
    pub eps: Option<(f64, f64)>,
    pub slack_norm: NormKind,
    pub slack_scale: SlackScale,
    pub opts: SolveOptions,
}

impl InnerSpec {
    pub fn plain(loss: LossKind, norm: NormSpec, opts: SolveOptions) -> Self {
        let d = SmoothingParams::default();
        InnerSpec {
            loss,
            norm,
            eps: None,
            slack_norm: d.slack_norm,
            slack_scale: d.slack_scale,
            opts,
        }
    }

    pub fn from_config(cfg: &TrainConfig, eps: Option<(f64, f64)>) -> Self {
        InnerSpec {
            loss: cfg.loss,
            norm: cfg.norm,
            eps,
            slack_norm: cfg.smoothing.slack_norm,
            slack_scale: cfg.smoothing.slack_scale,
            opts: cfg.solve,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerPoint {
    pub gamma: Vec<f64>,
    /// Full primitive point, lifting variables included.
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    /// One entry per primitive variable.
    pub mu: Vec<f64>,
    /// Suboptimality only: distance part and optimality gap part.
    pub gamma_f: f64,
    pub gamma_o: f64,
    /// Predictability: coupling-row slack (`n`). Suboptimality: dual-row slack (`q`).
    pub gamma_s1: Vec<f64>,
    /// Predictability only: dual-row slack (`q`).
    pub gamma_s2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub status: SolveStatus,
    /// Full objective, smoothing penalties included; `+inf` unless optimal.
    pub objective: f64,
    /// Data term alone.
    pub loss: f64,
    pub b: Vec<DVector<f64>>,
    pub points: Vec<InnerPoint>,
    pub eps: Option<(f64, f64)>,
}

impl InnerSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `sum_i ||gamma_s1,i||` and `sum_i ||gamma_s2,i||` in `kind`.
    pub fn slack_sums(&self, kind: NormKind) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for p in &self.points {
            out.0 += norm_value(kind, &p.gamma_s1);
            out.1 += norm_value(kind, &p.gamma_s2);
        }
        out
    }

    fn failed(status: SolveStatus, eps: Option<(f64, f64)>) -> Self {
        InnerSolution {
            status,
            objective: f64::INFINITY,
            loss: f64::INFINITY,
            b: Vec::new(),
            points: Vec::new(),
            eps,
        }
    }
}

struct PointVars {
    z: Range<usize>,
    lambda: Range<usize>,
    gamma: Range<usize>,
    gamma_o: Option<usize>,
    s1: Range<usize>,
    s2: Range<usize>,
    beta_block: usize,
    mu_block: usize,
}

/// The assembled program plus the variable map needed to read it back.
pub struct InnerProgram {
    pub program: ConicProgram,
    b_vars: Vec<Option<Range<usize>>>,
    points: Vec<PointVars>,
}

fn check_inputs(theta: &HypothesisParams, z: &PrimitiveSet, obj: &ObjectiveSpec, data: &IODataset) -> Result<()> {
    if data.is_empty() {
        return Err(CoreError::InvalidParameter(
            "training needs at least one observation".into(),
        ));
    }
    if data.n() != theta.n() || obj.n() != theta.n() {
        return Err(CoreError::Dimension(format!(
            "decisions have length {}, cost {}, hypothesis n = {}",
            data.n(),
            obj.n(),
            theta.n()
        )));
    }
    if data.k() != theta.k() {
        return Err(CoreError::Dimension(format!(
            "signals have length {} but the hypothesis expects K = {}",
            data.k(),
            theta.k()
        )));
    }
    if theta.p() != z.dim {
        return Err(CoreError::Dimension(format!(
            "hypothesis has p = {} but the primitive set has dimension {}",
            theta.p(),
            z.dim
        )));
    }
    Ok(())
}

/// Builds the inner program for a fixed `A` (frozen `b_k` are taken from
/// `theta`; trainable ones become variables).
pub fn build_inner(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    data: &IODataset,
    spec: &InnerSpec,
) -> Result<InnerProgram> {
    check_inputs(theta, z, obj, data)?;
    if spec.loss == LossKind::Suboptimality && spec.norm.pair != PairNorm::Separable {
        return Err(CoreError::InvalidParameter(
            "the trained suboptimality loss uses the separable pair norm".into(),
        ));
    }
    if let Some((e1, e2)) = spec.eps {
        if !(e1 > 0.0 && e2 > 0.0 && e1.is_finite() && e2.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "smoothing parameters must be positive and finite".into(),
            ));
        }
    }
    let n = theta.n();
    let q = z.num_vars();
    let l = z.num_rows();
    let big_n = data.len() as f64;

    let mut b = ProgramBuilder::new();
    let b_vars: Vec<Option<Range<usize>>> = theta
        .b_trainable
        .iter()
        .map(|&t| if t { Some(b.add_vars(n)) } else { None })
        .collect();

    let slack_weight = |eps: f64| match spec.slack_scale {
        SlackScale::Mean => eps / big_n,
        SlackScale::Sum => eps,
    };

    let mut points = Vec::with_capacity(data.len());
    for (s, x) in data.signals.iter().zip(&data.decisions) {
        let a = lifted_map(theta, z, s)?;
        let c = obj.cost(s)?;
        let mut b_fixed = DVector::<f64>::zeros(n);
        let weights: Vec<f64> = std::iter::once(1.0).chain(s.iter().copied()).collect();
        for (k, w) in weights.iter().enumerate() {
            if b_vars[k].is_none() {
                b_fixed += &theta.b[k] * *w;
            }
        }

        let zv = b.add_vars(q);
        let lam = b.add_vars(l);
        let gam = b.add_vars(n);
        let (s1_len, s2_len) = match (spec.eps, spec.loss) {
            (None, _) => (0, 0),
            (Some(_), LossKind::Predictability) => (n, q),
            (Some(_), LossKind::Suboptimality) => (q, 0),
        };
        let s1 = b.add_vars(s1_len);
        let s2 = b.add_vars(s2_len);
        let gamma_o = (spec.loss == LossKind::Suboptimality).then(|| {
            let v = b.add_var();
            b.set_lower(v, 0.0);
            b.add_cost(v, 1.0 / big_n);
            v
        });

        // Coupling rows.
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut terms: Vec<(usize, f64)> = zv
                .clone()
                .enumerate()
                .filter(|&(j, _)| a[(r, j)] != 0.0)
                .map(|(j, v)| (v, a[(r, j)]))
                .collect();
            for (k, w) in weights.iter().enumerate() {
                if let Some(bk) = &b_vars[k] {
                    if *w != 0.0 {
                        terms.push((bk.start + r, *w));
                    }
                }
            }
            if s1_len == n && spec.loss == LossKind::Predictability {
                terms.push((s1.start + r, 1.0));
            }
            terms.push((gam.start + r, -1.0));
            rows.push(Row::new(terms, x[r] - b_fixed[r]));
        }
        let beta_block = b.add_block(Cone::zero(n), rows);

        // Primitive membership.
        let mut offset = 0;
        for cone in &z.cones {
            let rows = (offset..offset + cone.dim)
                .map(|r| {
                    let terms = zv
                        .clone()
                        .enumerate()
                        .filter(|&(j, _)| z.h_mat[(r, j)] != 0.0)
                        .map(|(j, v)| (v, z.h_mat[(r, j)]))
                        .collect();
                    Row::new(terms, z.h[r])
                })
                .collect();
            b.add_block(*cone, rows);
            offset += cone.dim;
        }

        // Dual feasibility rows.
        let atc = a.transpose() * DVector::from_column_slice(&c);
        let dual_slack = match spec.loss {
            LossKind::Predictability => &s2,
            LossKind::Suboptimality => &s1,
        };
        let rows = (0..q)
            .map(|j| {
                let mut terms: Vec<(usize, f64)> = lam
                    .clone()
                    .enumerate()
                    .filter(|&(r, _)| z.h_mat[(r, j)] != 0.0)
                    .map(|(r, v)| (v, z.h_mat[(r, j)]))
                    .collect();
                if !dual_slack.is_empty() {
                    terms.push((dual_slack.start + j, -1.0));
                }
                Row::new(terms, atc[j])
            })
            .collect();
        let mu_block = b.add_block(Cone::zero(q), rows);

        // lambda ∈ K*; zero cones leave their multipliers free.
        let mut offset = 0;
        for cone in &z.cones {
            if cone.kind != ConeKind::Zero {
                let rows = (offset..offset + cone.dim)
                    .map(|r| Row::new(vec![(lam.start + r, 1.0)], 0.0))
                    .collect();
                b.add_block(*cone, rows);
            }
            offset += cone.dim;
        }

        // Strong duality row.
        let mut terms: Vec<(usize, f64)> = lam
            .clone()
            .enumerate()
            .filter(|&(r, _)| z.h[r] != 0.0)
            .map(|(r, v)| (v, z.h[r]))
            .collect();
        for (k, w) in weights.iter().enumerate() {
            if let Some(bk) = &b_vars[k] {
                if *w != 0.0 {
                    for r in 0..n {
                        if c[r] != 0.0 {
                            terms.push((bk.start + r, w * c[r]));
                        }
                    }
                }
            }
        }
        let cx = dot(&c, x) - dot(&c, b_fixed.as_slice());
        match spec.loss {
            LossKind::Predictability => {
                for r in 0..n {
                    if c[r] != 0.0 {
                        terms.push((gam.start + r, -c[r]));
                    }
                }
            }
            LossKind::Suboptimality => terms.push((gamma_o.expect("suboptimality slack"), 1.0)),
        }
        b.add_ge(terms, cx);

        let gvars: Vec<usize> = gam.clone().collect();
        add_norm_penalty(&mut b, spec.norm.gamma, &gvars, 1.0 / big_n);
        if let Some((e1, e2)) = spec.eps {
            let v1: Vec<usize> = s1.clone().collect();
            add_norm_penalty(&mut b, spec.slack_norm, &v1, slack_weight(e1));
            let v2: Vec<usize> = s2.clone().collect();
            add_norm_penalty(&mut b, spec.slack_norm, &v2, slack_weight(e2));
        }

        points.push(PointVars {
            z: zv,
            lambda: lam,
            gamma: gam,
            gamma_o,
            s1,
            s2,
            beta_block,
            mu_block,
        });
    }
    Ok(InnerProgram {
        program: b.build(),
        b_vars,
        points,
    })
}

/// Solves the inner program. Infeasible or unbounded programs come back with
/// an infinite objective; other solver failures are errors.
pub fn solve_inner(
    theta: &HypothesisParams,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    data: &IODataset,
    spec: &InnerSpec,
) -> Result<InnerSolution> {
    let inner = build_inner(theta, z, obj, data, spec)?;
    let sol = solve(&inner.program, &spec.opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible | SolveStatus::Unbounded => return Ok(InnerSolution::failed(sol.status, spec.eps)),
        other => {
            return Err(CoreError::Solver(format!("inner program ended with status {other:?}")));
        }
    }
    let v = &sol.primal;
    let b_out: Vec<DVector<f64>> = inner
        .b_vars
        .iter()
        .enumerate()
        .map(|(k, r)| match r {
            Some(r) => DVector::from_column_slice(&v[r.clone()]),
            None => theta.b[k].clone(),
        })
        .collect();
    let big_n = data.len() as f64;
    let mut loss = 0.0;
    let mut points = Vec::with_capacity(inner.points.len());
    for pv in &inner.points {
        let gamma = v[pv.gamma.clone()].to_vec();
        let gamma_f = norm_value(spec.norm.gamma, &gamma);
        let gamma_o = pv.gamma_o.map_or(0.0, |j| v[j].max(0.0));
        loss += gamma_f + gamma_o;
        points.push(InnerPoint {
            gamma,
            z: v[pv.z.clone()].to_vec(),
            lambda: v[pv.lambda.clone()].to_vec(),
            beta: sol.duals[pv.beta_block].clone(),
            mu: sol.duals[pv.mu_block].clone(),
            gamma_f,
            gamma_o,
            gamma_s1: v[pv.s1.clone()].to_vec(),
            gamma_s2: v[pv.s2.clone()].to_vec(),
        });
    }
    Ok(InnerSolution {
        status: sol.status,
        objective: sol.objective_value,
        loss: loss / big_n,
        b: b_out,
        points,
        eps: spec.eps,
    })
}

/// `dV/dA_k = sum_i s_ik (c_i mu_i' - beta_i z_i')` over the visible
/// primitive coordinates; zero for frozen terms.
pub fn gradient_a(
    theta: &HypothesisParams,
    inner: &InnerSolution,
    data: &IODataset,
    obj: &ObjectiveSpec,
) -> Result<Vec<DMatrix<f64>>> {
    if !inner.is_optimal() || inner.points.len() != data.len() {
        return Err(CoreError::InvalidParameter(
            "gradient needs an optimal inner solution with duals for every point".into(),
        ));
    }
    let (n, p) = (theta.n(), theta.p());
    let mut grads = vec![DMatrix::zeros(n, p); theta.a.len()];
    for (pt, s) in inner.points.iter().zip(&data.signals) {
        if pt.beta.len() != n || pt.mu.len() < p || pt.z.len() < p {
            return Err(CoreError::Dimension("inner solution is missing duals".into()));
        }
        let c = obj.cost(s)?;
        let mut g = DMatrix::zeros(n, p);
        for r in 0..n {
            for j in 0..p {
                g[(r, j)] = c[r] * pt.mu[j] - pt.beta[r] * pt.z[j];
            }
        }
        for (k, w) in std::iter::once(1.0).chain(s.iter().copied()).enumerate() {
            if theta.a_trainable[k] && w != 0.0 {
                grads[k] += &g * w;
            }
        }
    }
    Ok(grads)
}

pub fn frobenius_sq(g: &[DMatrix<f64>]) -> f64 {
    g.iter().map(|m| m.iter().map(|v| v * v).sum::<f64>()).sum()
}
