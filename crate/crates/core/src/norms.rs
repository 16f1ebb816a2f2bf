//! Norms used for the repositioning slack `gamma` and for the
//! (feasibility, optimality) slack pair of the suboptimality loss.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geometry::Cone;
use crate::solver::{ProgramBuilder, Row};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L2,
    /// `||v||_2^2`; not a norm, but the loss most experiments use.
    L2Squared,
    Linf,
}

impl std::str::FromStr for NormKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s {
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            "l2sq" | "l2_squared" => Ok(Self::L2Squared),
            "linf" => Ok(Self::Linf),
            other => Err(CoreError::InvalidParameter(format!("unknown norm `{other}`"))),
        }
    }
}

/// How `(gamma_f, gamma_o)` combine in the suboptimality loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairNorm {
    /// `|gamma_f| + |gamma_o|`.
    Separable,
    L2,
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormSpec {
    pub gamma: NormKind,
    pub pair: PairNorm,
}

impl NormSpec {
    pub fn new(gamma: NormKind) -> Self {
        NormSpec {
            gamma,
            pair: PairNorm::Separable,
        }
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec::new(NormKind::L2Squared)
    }
}

pub fn norm_value(kind: NormKind, v: &[f64]) -> f64 {
    match kind {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::L2Squared => v.iter().map(|x| x * x).sum(),
        NormKind::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

pub fn pair_value(pair: PairNorm, gamma_f: f64, gamma_o: f64) -> f64 {
    let (f, o) = (gamma_f.abs(), gamma_o.abs());
    match pair {
        PairNorm::Separable => f + o,
        PairNorm::L2 => f.hypot(o),
        PairNorm::Linf => f.max(o),
    }
}

/// Adds `weight * ||v||` over the builder variables `vars` to the objective,
/// introducing epigraph variables where the norm is not directly linear or
/// quadratic.
pub fn add_norm_penalty(b: &mut ProgramBuilder, kind: NormKind, vars: &[usize], weight: f64) {
    if vars.is_empty() || weight == 0.0 {
        return;
    }
    match kind {
        NormKind::L1 => {
            let t = b.add_vars(vars.len());
            for (tj, &vj) in t.zip(vars) {
                b.add_cost(tj, weight);
                b.add_block(
                    Cone::nonneg(2),
                    vec![
                        Row::new(vec![(tj, 1.0), (vj, -1.0)], 0.0),
                        Row::new(vec![(tj, 1.0), (vj, 1.0)], 0.0),
                    ],
                );
            }
        }
        NormKind::L2 => {
            let t = b.add_var();
            b.add_cost(t, weight);
            let mut rows = vec![Row::new(vec![(t, 1.0)], 0.0)];
            rows.extend(vars.iter().map(|&vj| Row::new(vec![(vj, 1.0)], 0.0)));
            b.add_block(Cone::second_order(vars.len() + 1), rows);
        }
        NormKind::L2Squared => {
            for &vj in vars {
                b.add_square_cost(vj, weight);
            }
        }
        NormKind::Linf => {
            let t = b.add_var();
            b.add_cost(t, weight);
            let mut rows = Vec::with_capacity(2 * vars.len());
            for &vj in vars {
                rows.push(Row::new(vec![(t, 1.0), (vj, -1.0)], 0.0));
                rows.push(Row::new(vec![(t, 1.0), (vj, 1.0)], 0.0));
            }
            b.add_block(Cone::nonneg(rows.len()), rows);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, SolveOptions};

    #[test]
    fn values() {
        let v = [3.0, -4.0];
        assert_eq!(norm_value(NormKind::L1, &v), 7.0);
        assert_eq!(norm_value(NormKind::L2, &v), 5.0);
        assert_eq!(norm_value(NormKind::L2Squared, &v), 25.0);
        assert_eq!(norm_value(NormKind::Linf, &v), 4.0);
        assert_eq!(pair_value(PairNorm::Separable, 1.0, 0.3), 1.3);
        assert_eq!(pair_value(PairNorm::L2, 3.0, 4.0), 5.0);
    }

    // Penalty encodings: min ||v|| with v = target must return the norm.
    #[test]
    fn penalty_encodings_reproduce_the_norm() {
        let target = [0.5, -2.0, 1.25];
        for kind in [NormKind::L1, NormKind::L2, NormKind::L2Squared, NormKind::Linf] {
            let mut b = ProgramBuilder::new();
            let v = b.add_vars(3);
            for (j, t) in v.clone().zip(target) {
                b.add_eq(vec![(j, 1.0)], t);
            }
            let vars: Vec<usize> = v.collect();
            add_norm_penalty(&mut b, kind, &vars, 2.0);
            let sol = solve(&b.build(), &SolveOptions::default()).unwrap();
            assert!(sol.is_optimal());
            let want = 2.0 * norm_value(kind, &target);
            assert!((sol.objective_value - want).abs() <= 1e-7 * want.max(1.0), "{kind:?}");
        }
    }
}
