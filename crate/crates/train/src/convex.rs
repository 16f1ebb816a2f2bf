//! Scalar-alpha hypothesis `A(s) = alpha I`: substituting `zeta_i = alpha z_i`
//! turns training into one convex program.

use std::time::Instant;

use invfeas_core::dataset::IODataset;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::{Cone, ConeKind, PrimitiveSet};
use invfeas_core::hypothesis::HypothesisParams;
use invfeas_core::linalg::dot;
use invfeas_core::norms::{add_norm_penalty, NormSpec, PairNorm};
use invfeas_core::solver::{solve, ProgramBuilder, Row, SolveOptions, SolveStatus};
use invfeas_core::{CoreError, Result};
use nalgebra::DVector;

use crate::config::{LossKind, Termination, TrainReport};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexFit {
    pub alpha: f64,
    pub theta: HypothesisParams,
    pub train_loss: f64,
    pub status: SolveStatus,
}

/// Jointly optimal `alpha >= 0` and `b_0 .. b_K` for the given loss.
pub fn train_convex_alpha(
    data: &IODataset,
    z: &PrimitiveSet,
    obj: &ObjectiveSpec,
    norm: &NormSpec,
    loss: LossKind,
    opts: &SolveOptions,
) -> Result<ConvexFit> {
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
    let n = data.n();
    let k = data.k();
    if obj.n() != n {
        return Err(CoreError::Dimension(format!(
            "cost has length {} but decisions {}",
            obj.n(),
            n
        )));
    }
    let p = z.dim;
    let q = z.num_vars();
    let l = z.num_rows();
    let big_n = data.len() as f64;

    let mut b = ProgramBuilder::new();
    let alpha = b.add_var();
    b.set_lower(alpha, 0.0);
    let bvars: Vec<_> = (0..=k).map(|_| b.add_vars(n)).collect();

    for (s, x) in data.signals.iter().zip(&data.decisions) {
        let c = obj.cost(s)?;
        let weights: Vec<f64> = std::iter::once(1.0).chain(s.iter().copied()).collect();
        let zeta = b.add_vars(q);
        let lam = b.add_vars(l);
        let gam = b.add_vars(n);

        // x + gamma = I_{n x p} zeta + b(s)
        for r in 0..n {
            let mut terms = vec![(gam.start + r, -1.0)];
            if r < p {
                terms.push((zeta.start + r, 1.0));
            }
            for (kk, w) in weights.iter().enumerate() {
                if *w != 0.0 {
                    terms.push((bvars[kk].start + r, *w));
                }
            }
            b.add_eq(terms, x[r]);
        }
        // H zeta - alpha h ∈ K
        let mut offset = 0;
        for cone in &z.cones {
            let rows = (offset..offset + cone.dim)
                .map(|r| {
                    let mut terms: Vec<(usize, f64)> = (0..q)
                        .filter(|&j| z.h_mat[(r, j)] != 0.0)
                        .map(|j| (zeta.start + j, z.h_mat[(r, j)]))
                        .collect();
                    if z.h[r] != 0.0 {
                        terms.push((alpha, -z.h[r]));
                    }
                    Row::new(terms, 0.0)
                })
                .collect();
            b.add_block(*cone, rows);
            offset += cone.dim;
        }
        // H' lambda = alpha Ī' c
        for j in 0..q {
            let mut terms: Vec<(usize, f64)> = (0..l)
                .filter(|&r| z.h_mat[(r, j)] != 0.0)
                .map(|r| (lam.start + r, z.h_mat[(r, j)]))
                .collect();
            if j < p && j < n && c[j] != 0.0 {
                terms.push((alpha, -c[j]));
            }
            b.add_eq(terms, 0.0);
        }
        // lambda ∈ K*
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
        // h'lambda + c'b(s) - c'x [- c'gamma | + gamma_o] >= 0
        let mut terms: Vec<(usize, f64)> = (0..l)
            .filter(|&r| z.h[r] != 0.0)
            .map(|r| (lam.start + r, z.h[r]))
            .collect();
        for (kk, w) in weights.iter().enumerate() {
            if *w != 0.0 {
                for r in 0..n {
                    if c[r] != 0.0 {
                        terms.push((bvars[kk].start + r, w * c[r]));
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
        b.add_block(Cone::nonneg(1), vec![Row::new(terms, dot(&c, x))]);
        let gvars: Vec<usize> = gam.collect();
        add_norm_penalty(&mut b, norm.gamma, &gvars, 1.0 / big_n);
    }

    let sol = solve(&b.build(), opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(CoreError::Solver(format!(
            "convex training program ended with status {:?}",
            sol.status
        )));
    }
    let a_val = sol.primal[alpha].max(0.0);
    let bs: Vec<DVector<f64>> = bvars
        .iter()
        .map(|r| DVector::from_column_slice(&sol.primal[r.clone()]))
        .collect();
    let mut theta = HypothesisParams::scalar_alpha(a_val, p, bs)?;
    theta.b_trainable = vec![true; k + 1];
    Ok(ConvexFit {
        alpha: a_val,
        theta,
        train_loss: sol.objective_value,
        status: sol.status,
    })
}

pub fn convex_report(fit: &ConvexFit, wall: Instant) -> TrainReport {
    TrainReport {
        algorithm: "convex_alpha".into(),
        initial_objective: fit.train_loss,
        trajectory: Vec::new(),
        theta: fit.theta.clone(),
        final_loss: fit.train_loss,
        final_slack1: 0.0,
        final_slack2: 0.0,
        termination: Termination::Exact,
        wall_time_s: wall.elapsed().as_secs_f64(),
        mip_gap: None,
        notes: vec![format!("alpha = {}", fit.alpha)],
    }
}
