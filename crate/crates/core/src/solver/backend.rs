//! Adapter from [`ConicProgram`] to the clarabel interior-point solver.
//!
//! Our rows read `A v - b ∈ K`; clarabel wants `A' x + s = b'` with
//! `s ∈ K`, so we hand it `A' = -A`, `b' = -b`. Its dual `z` then satisfies
//! `Qv + c - A'z = 0`, which is exactly our `lambda`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use nalgebra::DMatrix;

use super::{check_certificates, ConicProgram, ConicSolution, SolveOptions, SolveStatus};
use crate::error::{CoreError, Result};
use crate::geometry::ConeKind;

const PSD_TOL: f64 = 1e-8;

fn validate(prog: &ConicProgram) -> Result<()> {
    let n = prog.num_vars;
    if prog.linear.len() != n || prog.var_bounds.len() != n {
        return Err(CoreError::InvalidProgram(
            "objective and bounds must cover every variable".into(),
        ));
    }
    for (idx, block) in prog.blocks.iter().enumerate() {
        if block.cone.dim != block.rows.len() || block.cone.dim == 0 {
            return Err(CoreError::InvalidProgram(format!(
                "block {idx}: cone dimension {} but {} rows",
                block.cone.dim,
                block.rows.len()
            )));
        }
        for row in &block.rows {
            if row.terms.iter().any(|&(j, a)| j >= n || !a.is_finite()) || !row.rhs.is_finite() {
                return Err(CoreError::InvalidProgram(format!(
                    "block {idx}: bad column index or non-finite coefficient"
                )));
            }
        }
    }
    for &(lo, hi) in &prog.var_bounds {
        if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(CoreError::InvalidProgram(format!("empty bound interval [{lo}, {hi}]")));
        }
    }
    if prog
        .quadratic
        .iter()
        .any(|&(i, j, q)| i > j || j >= n || !q.is_finite())
    {
        return Err(CoreError::InvalidProgram(
            "quadratic entries must be finite and upper triangular".into(),
        ));
    }
    if !is_psd(prog) {
        return Err(CoreError::InvalidProgram(
            "quadratic term is not positive semidefinite".into(),
        ));
    }
    Ok(())
}

fn is_psd(prog: &ConicProgram) -> bool {
    if prog.quadratic.iter().all(|&(i, j, _)| i == j) {
        return prog.quadratic.iter().all(|&(_, _, q)| q >= -PSD_TOL);
    }
    let mut touched: Vec<usize> = prog.quadratic.iter().flat_map(|&(i, j, _)| [i, j]).collect();
    touched.sort_unstable();
    touched.dedup();
    let pos = |k: usize| touched.binary_search(&k).unwrap();
    let m = touched.len();
    let mut dense = DMatrix::<f64>::zeros(m, m);
    for &(i, j, q) in &prog.quadratic {
        dense[(pos(i), pos(j))] += q;
        if i != j {
            dense[(pos(j), pos(i))] += q;
        }
    }
    let scale = dense.diagonal().amax().max(1.0);
    for k in 0..m {
        dense[(k, k)] += PSD_TOL * scale;
    }
    dense.cholesky().is_some()
}

/// Solves `prog`. Malformed programs are an error; infeasibility,
/// unboundedness and numerical trouble are reported through the status.
pub fn solve(prog: &ConicProgram, opts: &SolveOptions) -> Result<ConicSolution> {
    validate(prog)?;
    let n = prog.num_vars;

    let mut rows_i = Vec::new();
    let mut cols_j = Vec::new();
    let mut vals = Vec::new();
    let mut rhs = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;
    for block in &prog.blocks {
        for r in &block.rows {
            for &(j, a) in &r.terms {
                rows_i.push(row);
                cols_j.push(j);
                vals.push(-a);
            }
            rhs.push(-r.rhs);
            row += 1;
        }
        cones.push(match block.cone.kind {
            ConeKind::Zero => ZeroConeT(block.cone.dim),
            ConeKind::Nonnegative => NonnegativeConeT(block.cone.dim),
            ConeKind::SecondOrder if block.cone.dim == 1 => NonnegativeConeT(1),
            ConeKind::SecondOrder => SecondOrderConeT(block.cone.dim),
        });
    }
    // Finite variable bounds become one trailing orthant block.
    let mut bound_rows: Vec<(usize, bool)> = Vec::new();
    for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
        if lo.is_finite() {
            rows_i.push(row);
            cols_j.push(j);
            vals.push(-1.0);
            rhs.push(-lo);
            bound_rows.push((j, false));
            row += 1;
        }
        if hi.is_finite() {
            rows_i.push(row);
            cols_j.push(j);
            vals.push(1.0);
            rhs.push(hi);
            bound_rows.push((j, true));
            row += 1;
        }
    }
    if !bound_rows.is_empty() {
        cones.push(NonnegativeConeT(bound_rows.len()));
    }
    let m = row;

    let a_mat = CscMatrix::new_from_triplets(m, n, rows_i, cols_j, vals);
    let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = {
        let mut pi = Vec::new();
        let mut pj = Vec::new();
        let mut pv = Vec::new();
        for &(i, j, q) in &prog.quadratic {
            pi.push(i);
            pj.push(j);
            pv.push(q);
        }
        (pi, pj, pv)
    };
    let p_mat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    let tol = opts.solver_tol;
    let settings = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iters,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        tol_ktratio: tol.max(1e-10) * 100.0,
        max_threads: 1,
        ..DefaultSettings::default()
    };

    let mut solver = DefaultSolver::new(&p_mat, &prog.linear, &a_mat, &rhs, &cones, settings)
        .map_err(|e| CoreError::InvalidProgram(format!("backend rejected program: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let primal = sol.x.clone();
    let mut duals = Vec::with_capacity(prog.blocks.len());
    let mut offset = 0;
    for block in &prog.blocks {
        duals.push(sol.z[offset..offset + block.cone.dim].to_vec());
        offset += block.cone.dim;
    }
    let mut bound_duals = vec![(0.0, 0.0); n];
    for (k, &(j, upper)) in bound_rows.iter().enumerate() {
        let z = sol.z[offset + k];
        if upper {
            bound_duals[j].1 = z;
        } else {
            bound_duals[j].0 = z;
        }
    }

    let (status, certificates) = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let cert = check_certificates(prog, &primal, &duals, &bound_duals);
            let status = if cert.pass(opts) {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            };
            (status, Some(cert))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, None),
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (SolveStatus::Unbounded, None),
        SolverStatus::MaxIterations | SolverStatus::MaxTime => (SolveStatus::IterationLimit, None),
        _ => (SolveStatus::NumericalFailure, None),
    };
    let objective_value = match status {
        SolveStatus::Optimal => prog.objective(&primal),
        SolveStatus::Infeasible => f64::INFINITY,
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        _ => prog.objective(&primal),
    };

    Ok(ConicSolution {
        status,
        primal,
        objective_value,
        duals,
        bound_duals,
        iterations: sol.iterations,
        certificates,
    })
}
