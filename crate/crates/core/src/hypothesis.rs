//! The affine hypothesis `theta = ({A_k}, {b_k})` with
//! `A(s) = A_0 + sum_k A_k s_k` and `b(s) = b_0 + sum_k b_k s_k`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Structure {
    /// Every `A_k` flagged trainable is a free `n x p` matrix.
    Free,
    /// `A(s) = alpha * I` for a scalar `alpha >= 0`.
    ScalarAlpha { alpha: f64 },
    /// `A` is a signal-independent signed incidence matrix: candidate line
    /// `m` joins `candidates[m].0` (+1) and `candidates[m].1` (-1) and is
    /// present iff `selected[m]`.
    SignedIncidence {
        candidates: Vec<(usize, usize)>,
        selected: Vec<bool>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Free,
    ScalarAlpha,
    SignedIncidence,
}

impl std::str::FromStr for StructureKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(Self::Free),
            "scalar_alpha" => Ok(Self::ScalarAlpha),
            "signed_incidence" => Ok(Self::SignedIncidence),
            other => Err(CoreError::InvalidParameter(format!("unknown structure `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HypothesisRepr", into = "HypothesisRepr")]
pub struct HypothesisParams {
    /// `A_0 .. A_K`, each `n x p`. Only meaningful for [`Structure::Free`].
    pub a: Vec<DMatrix<f64>>,
    /// `b_0 .. b_K`, each of length `n`.
    pub b: Vec<DVector<f64>>,
    /// Which `A_k` a trainer may move. Frozen terms keep their value.
    pub a_trainable: Vec<bool>,
    /// Which `b_k` the inner program may choose. Frozen terms keep their value.
    pub b_trainable: Vec<bool>,
    pub structure: Structure,
    pub seed: Option<u64>,
    pub provenance: Option<Provenance>,
}

impl HypothesisParams {
    /// A free hypothesis with the given matrices and vectors, all trainable.
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self> {
        let terms = a.len();
        let params = HypothesisParams {
            a,
            b,
            a_trainable: vec![true; terms],
            b_trainable: vec![true; terms],
            structure: Structure::Free,
            seed: None,
            provenance: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// `A(s) = alpha I`, `b(s) = b_0 + sum_k b_k s_k`.
    pub fn scalar_alpha(alpha: f64, p: usize, b: Vec<DVector<f64>>) -> Result<Self> {
        let n = b.first().map_or(0, |v| v.len());
        let terms = b.len();
        let params = HypothesisParams {
            a: vec![DMatrix::zeros(n, p); terms],
            b,
            a_trainable: vec![false; terms],
            b_trainable: vec![true; terms],
            structure: Structure::ScalarAlpha { alpha },
            seed: None,
            provenance: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// Signed incidence hypothesis over `nodes` nodes.
    pub fn signed_incidence(
        nodes: usize,
        candidates: Vec<(usize, usize)>,
        selected: Vec<bool>,
        b: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let terms = b.len();
        let p = candidates.len();
        let params = HypothesisParams {
            a: vec![DMatrix::zeros(nodes, p); terms],
            b,
            a_trainable: vec![false; terms],
            b_trainable: vec![false; terms],
            structure: Structure::SignedIncidence { candidates, selected },
            seed: None,
            provenance: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.a[0].ncols()
    }

    /// Number of signal coordinates `K`.
    pub fn k(&self) -> usize {
        self.a.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(CoreError::Dimension("at least A_0 is required".into()));
        }
        let (n, p) = self.a[0].shape();
        if self.a.iter().any(|m| m.shape() != (n, p)) {
            return Err(CoreError::Dimension("all A_k must share one shape".into()));
        }
        if self.b.len() != self.a.len() {
            return Err(CoreError::Dimension(format!(
                "{} A terms but {} b terms",
                self.a.len(),
                self.b.len()
            )));
        }
        if self.b.iter().any(|v| v.len() != n) {
            return Err(CoreError::Dimension(format!("every b_k must have length {n}")));
        }
        if self.a_trainable.len() != self.a.len() || self.b_trainable.len() != self.b.len() {
            return Err(CoreError::Dimension("trainable masks must have K+1 entries".into()));
        }
        match &self.structure {
            Structure::Free => {}
            Structure::ScalarAlpha { alpha } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return Err(CoreError::InvalidParameter(format!(
                        "alpha must be a nonnegative number, got {alpha}"
                    )));
                }
            }
            Structure::SignedIncidence { candidates, selected } => {
                if candidates.len() != p || selected.len() != p {
                    return Err(CoreError::Dimension("one candidate and one selector per column".into()));
                }
                if candidates.iter().any(|&(u, v)| u == v || u >= n || v >= n) {
                    return Err(CoreError::InvalidParameter(
                        "candidate lines must join two distinct existing nodes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_signal(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.k() {
            return Err(CoreError::Dimension(format!(
                "signal of length {} for a hypothesis with K = {}",
                s.len(),
                self.k()
            )));
        }
        Ok(())
    }

    /// `A(s)`, an `n x p` matrix.
    pub fn eval_a(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        self.check_signal(s)?;
        let (n, p) = (self.n(), self.p());
        Ok(match &self.structure {
            Structure::Free => {
                let mut out = self.a[0].clone();
                for (k, sk) in s.iter().enumerate() {
                    out += &self.a[k + 1] * *sk;
                }
                out
            }
            Structure::ScalarAlpha { alpha } => DMatrix::identity(n, p) * *alpha,
            Structure::SignedIncidence { candidates, selected } => incidence_matrix(n, candidates, selected),
        })
    }

    /// `b(s)`, a vector of length `n`.
    pub fn eval_b(&self, s: &[f64]) -> Result<DVector<f64>> {
        self.check_signal(s)?;
        let mut out = self.b[0].clone();
        for (k, sk) in s.iter().enumerate() {
            out += &self.b[k + 1] * *sk;
        }
        Ok(out)
    }

    /// Replaces the `A_k` matrices of a free hypothesis.
    pub fn with_a(&self, a: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut next = self.clone();
        next.a = a;
        next.validate()?;
        Ok(next)
    }

    pub fn with_b(&self, b: Vec<DVector<f64>>) -> Result<Self> {
        let mut next = self.clone();
        next.b = b;
        next.validate()?;
        Ok(next)
    }

    /// Freezes `A_1 .. A_K` so that `A(s) = A_0` stays signal independent.
    pub fn constant_a(mut self) -> Self {
        for k in 1..self.a.len() {
            self.a[k].fill(0.0);
            self.a_trainable[k] = false;
        }
        self
    }
}

/// Dense signed incidence matrix for the selected candidate lines.
pub fn incidence_matrix(nodes: usize, candidates: &[(usize, usize)], selected: &[bool]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(nodes, candidates.len());
    for (m, (&(u, v), &on)) in candidates.iter().zip(selected).enumerate() {
        if on {
            a[(u, m)] = 1.0;
            a[(v, m)] = -1.0;
        }
    }
    a
}

/// All unordered node pairs `(u, v)` with `u < v`, in lexicographic order.
pub fn complete_graph_candidates(nodes: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            out.push((u, v));
        }
    }
    out
}

/// Deterministic initial hypothesis of shape `(n, p, K)`.
///
/// Free: every `A_k` entry iid uniform on `[-scale, scale]`; scalar alpha:
/// `alpha = 1`; signed incidence over the complete graph with every line
/// present (`p` is then forced to `n(n-1)/2`). All `b_k` start at zero.
pub fn init_params(shape: (usize, usize, usize), structure: StructureKind, seed: u64) -> Result<HypothesisParams> {
    init_params_scaled(shape, structure, seed, 1.0)
}

pub fn init_params_scaled(
    shape: (usize, usize, usize),
    structure: StructureKind,
    seed: u64,
    scale: f64,
) -> Result<HypothesisParams> {
    let (n, p, k) = shape;
    if n == 0 || p == 0 {
        return Err(CoreError::InvalidParameter("n and p must be at least 1".into()));
    }
    let b = vec![DVector::zeros(n); k + 1];
    let mut params = match structure {
        StructureKind::Free => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = (0..=k)
                .map(|_| DMatrix::from_fn(n, p, |_, _| rng.gen_range(-scale..=scale)))
                .collect();
            HypothesisParams::new(a, b)?
        }
        StructureKind::ScalarAlpha => HypothesisParams::scalar_alpha(1.0, p, b)?,
        StructureKind::SignedIncidence => {
            let candidates = complete_graph_candidates(n);
            let selected = vec![true; candidates.len()];
            HypothesisParams::signed_incidence(n, candidates, selected, b)?
        }
    };
    params.seed = Some(seed);
    Ok(params)
}

#[derive(Serialize, Deserialize)]
struct HypothesisRepr {
    n: usize,
    p: usize,
    #[serde(rename = "K")]
    k: usize,
    structure: Structure,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<f64>>,
    a_trainable: Vec<bool>,
    b_trainable: Vec<bool>,
    seed: Option<u64>,
    provenance: Option<Provenance>,
}

impl From<HypothesisParams> for HypothesisRepr {
    fn from(h: HypothesisParams) -> Self {
        HypothesisRepr {
            n: h.n(),
            p: h.p(),
            k: h.k(),
            a: h.a.iter().map(matrix_to_rows).collect(),
            b: h.b.iter().map(|v| v.as_slice().to_vec()).collect(),
            structure: h.structure,
            a_trainable: h.a_trainable,
            b_trainable: h.b_trainable,
            seed: h.seed,
            provenance: h.provenance,
        }
    }
}

impl TryFrom<HypothesisRepr> for HypothesisParams {
    type Error = CoreError;

    fn try_from(r: HypothesisRepr) -> Result<Self> {
        let a =
            r.a.iter()
                .map(|rows| {
                    let m = matrix_from_rows(rows, r.p)?;
                    if m.nrows() == 0 {
                        Ok(DMatrix::zeros(r.n, r.p))
                    } else {
                        Ok(m)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
        let params = HypothesisParams {
            a,
            b: r.b.into_iter().map(DVector::from_vec).collect(),
            a_trainable: r.a_trainable,
            b_trainable: r.b_trainable,
            structure: r.structure,
            seed: r.seed,
            provenance: r.provenance,
        };
        params.validate()?;
        if params.n() != r.n || params.p() != r.p || params.k() != r.k {
            return Err(CoreError::Dimension("header shape disagrees with matrices".into()));
        }
        Ok(params)
    }
}
