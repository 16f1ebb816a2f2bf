//! Cones and conic primitive sets `Z = {z : H z - h ∈ K}`.
//!
//! Every primitive set is stored in the same normal form: a dense `H`, a
//! right-hand side `h` and an ordered list of cones partitioning the rows of
//! `H z - h`. Sets that need auxiliary variables (the L1 ball) keep them as
//! trailing columns of `H`; the first `dim` columns are the visible
//! coordinates that a hypothesis maps into decision space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Tolerance used wherever a caller does not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    /// `{0}^d`; its dual is all of `R^d`.
    Zero,
    /// `R^d_+`, self-dual.
    Nonnegative,
    /// `{(t, u) : t >= ||u||_2}`, self-dual. `dim` counts `t` as well.
    SecondOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cone {
    pub kind: ConeKind,
    pub dim: usize,
}

impl Cone {
    pub fn zero(dim: usize) -> Self {
        Cone {
            kind: ConeKind::Zero,
            dim,
        }
    }

    pub fn nonneg(dim: usize) -> Self {
        Cone {
            kind: ConeKind::Nonnegative,
            dim,
        }
    }

    pub fn second_order(dim: usize) -> Self {
        Cone {
            kind: ConeKind::SecondOrder,
            dim,
        }
    }

    /// Largest violation of membership of `v` in this cone.
    ///
    /// Zero cone: `max |v_i|`; orthant: `max(-v_i, 0)`;
    /// second-order: `max(||u|| - t, 0)`.
    pub fn violation(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        match self.kind {
            ConeKind::Zero => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            ConeKind::Nonnegative => v.iter().fold(0.0, |m, x| m.max(-x)),
            ConeKind::SecondOrder => {
                if v.is_empty() {
                    return 0.0;
                }
                let tail = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                (tail - v[0]).max(0.0)
            }
        }
    }

    /// Violation of membership in the dual cone.
    pub fn dual_violation(&self, v: &[f64]) -> f64 {
        match self.kind {
            ConeKind::Zero => 0.0,
            _ => self.violation(v),
        }
    }
}

/// Sum of the dimensions of a cone product.
pub fn total_dim(cones: &[Cone]) -> usize {
    cones.iter().map(|c| c.dim).sum()
}

/// Splits `v` into per-cone blocks and reports the worst violation, using
/// either the primal or the dual cone.
fn product_violation(cones: &[Cone], v: &[f64], dual: bool) -> Result<f64> {
    let want = total_dim(cones);
    if v.len() != want {
        return Err(CoreError::Dimension(format!(
            "vector of length {} does not match cone product of dimension {want}",
            v.len()
        )));
    }
    let mut worst: f64 = 0.0;
    let mut offset = 0;
    for cone in cones {
        let block = &v[offset..offset + cone.dim];
        let viol = if dual {
            cone.dual_violation(block)
        } else {
            cone.violation(block)
        };
        worst = worst.max(viol);
        offset += cone.dim;
    }
    Ok(worst)
}

/// True iff `v` lies in the cone product within `tol`.
pub fn in_cone(cones: &[Cone], v: &[f64], tol: f64) -> Result<bool> {
    Ok(product_violation(cones, v, false)? <= tol)
}

/// True iff every block of `lambda` lies in the dual of its cone within `tol`.
pub fn in_dual_cone(cones: &[Cone], lambda: &[f64], tol: f64) -> Result<bool> {
    Ok(product_violation(cones, lambda, true)? <= tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Simplex,
    BinarySimplex,
    Box,
    L1Ball,
    L2Ball,
    /// Any other `(H, h, K)` supplied explicitly.
    Custom,
}

impl std::str::FromStr for PrimitiveKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex" => Ok(Self::Simplex),
            "binary_simplex" => Ok(Self::BinarySimplex),
            "box" => Ok(Self::Box),
            "l1_ball" => Ok(Self::L1Ball),
            "l2_ball" => Ok(Self::L2Ball),
            "custom" => Ok(Self::Custom),
            other => Err(CoreError::InvalidParameter(format!("unknown primitive kind `{other}`"))),
        }
    }
}

/// Shape parameters of the standard primitive sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveParams {
    /// Ball radius (default 1).
    pub radius: Option<f64>,
    /// Box lower bound, shared by all coordinates (default -1).
    pub lower: Option<f64>,
    /// Box upper bound, shared by all coordinates (default 1).
    pub upper: Option<f64>,
}

impl PrimitiveParams {
    pub fn radius(r: f64) -> Self {
        PrimitiveParams {
            radius: Some(r),
            ..Default::default()
        }
    }

    pub fn bounds(lower: f64, upper: f64) -> Self {
        PrimitiveParams {
            lower: Some(lower),
            upper: Some(upper),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveSetRepr", into = "PrimitiveSetRepr")]
pub struct PrimitiveSet {
    pub kind: PrimitiveKind,
    /// Number of visible coordinates `p`.
    pub dim: usize,
    pub params: PrimitiveParams,
    /// `l x q` with `q >= dim`; columns past `dim` are lifting variables.
    pub h_mat: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cones: Vec<Cone>,
    /// One flag per column of `H`.
    pub integrality: Vec<bool>,
}

impl PrimitiveSet {
    /// Builds a set from explicit data, checking that the dimensions agree.
    pub fn from_parts(
        kind: PrimitiveKind,
        dim: usize,
        params: PrimitiveParams,
        h_mat: DMatrix<f64>,
        h: DVector<f64>,
        cones: Vec<Cone>,
        integrality: Vec<bool>,
    ) -> Result<Self> {
        let set = PrimitiveSet {
            kind,
            dim,
            params,
            h_mat,
            h,
            cones,
            integrality,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let l = self.h_mat.nrows();
        if self.h.len() != l {
            return Err(CoreError::Dimension(format!(
                "H has {l} rows but h has length {}",
                self.h.len()
            )));
        }
        if total_dim(&self.cones) != l {
            return Err(CoreError::Dimension(format!(
                "cone dimensions sum to {} but H has {l} rows",
                total_dim(&self.cones)
            )));
        }
        if self.dim == 0 || self.dim > self.h_mat.ncols() {
            return Err(CoreError::Dimension(format!(
                "visible dimension {} incompatible with {} columns",
                self.dim,
                self.h_mat.ncols()
            )));
        }
        if self.integrality.len() != self.h_mat.ncols() {
            return Err(CoreError::Dimension(
                "integrality flags must cover every column of H".into(),
            ));
        }
        if self.cones.iter().any(|c| c.dim == 0) {
            return Err(CoreError::InvalidParameter("cone of dimension 0".into()));
        }
        Ok(())
    }

    /// Total number of columns `q` (visible plus lifting variables).
    pub fn num_vars(&self) -> usize {
        self.h_mat.ncols()
    }

    /// Number of conic rows `l`.
    pub fn num_rows(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn is_lifted(&self) -> bool {
        self.num_vars() > self.dim
    }

    pub fn has_integrality(&self) -> bool {
        self.integrality.iter().any(|&f| f)
    }

    /// Residual `H w - h` for a full (lifted) vector `w`.
    pub fn residual(&self, w: &[f64]) -> Result<DVector<f64>> {
        if w.len() != self.num_vars() {
            return Err(CoreError::Dimension(format!(
                "expected {} coordinates, got {}",
                self.num_vars(),
                w.len()
            )));
        }
        Ok(&self.h_mat * DVector::from_column_slice(w) - &self.h)
    }

    /// Extends a visible point to the full variable vector using the
    /// canonical lift of the standard sets. Full-length input passes through.
    pub fn lift(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() == self.num_vars() {
            return Ok(z.to_vec());
        }
        if z.len() != self.dim {
            return Err(CoreError::Dimension(format!(
                "point of length {} for a set of dimension {}",
                z.len(),
                self.dim
            )));
        }
        match self.kind {
            PrimitiveKind::L1Ball => {
                let mut w = z.to_vec();
                w.extend(z.iter().map(|v| v.max(0.0)));
                w.extend(z.iter().map(|v| (-v).max(0.0)));
                Ok(w)
            }
            _ => Err(CoreError::Dimension(format!(
                "set of kind {:?} has lifting variables; pass all {} coordinates",
                self.kind,
                self.num_vars()
            ))),
        }
    }

    /// Membership test; integer-flagged coordinates must also be within
    /// `tol` of an integer.
    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool> {
        let w = self.lift(z)?;
        let r = self.residual(&w)?;
        if !in_cone(&self.cones, r.as_slice(), tol)? {
            return Ok(false);
        }
        let integral = w
            .iter()
            .zip(&self.integrality)
            .filter(|(_, &flag)| flag)
            .all(|(v, _)| (v - v.round()).abs() <= tol);
        Ok(integral)
    }

    /// A point every standard constructor guarantees to be a member.
    pub fn canonical_member(&self) -> Vec<f64> {
        let q = self.num_vars();
        match self.kind {
            PrimitiveKind::Simplex | PrimitiveKind::BinarySimplex => {
                let mut w = vec![0.0; q];
                w[0] = 1.0;
                w
            }
            PrimitiveKind::Box => {
                let lo = self.params.lower.unwrap_or(-1.0);
                let hi = self.params.upper.unwrap_or(1.0);
                vec![0.5 * (lo + hi); q]
            }
            PrimitiveKind::L1Ball | PrimitiveKind::L2Ball | PrimitiveKind::Custom => vec![0.0; q],
        }
    }
}

/// Constructs one of the standard primitive sets in conic normal form.
///
/// * simplex: `z >= 0` (orthant) and `e'z = 1` (zero cone)
/// * binary simplex: the simplex with every coordinate flagged integral
/// * box: `z - lower >= 0`, `upper - z >= 0`
/// * L2 ball: one second-order block `(r, z)`
/// * L1 ball: lifted as `z = u - v`, `u, v >= 0`, `e'(u + v) <= r`
pub fn make_primitive(kind: PrimitiveKind, dim: usize, params: &PrimitiveParams) -> Result<PrimitiveSet> {
    if dim == 0 {
        return Err(CoreError::InvalidParameter("dimension must be at least 1".into()));
    }
    let p = dim;
    match kind {
        PrimitiveKind::Simplex | PrimitiveKind::BinarySimplex => {
            let mut h_mat = DMatrix::zeros(p + 1, p);
            for j in 0..p {
                h_mat[(j, j)] = 1.0;
                h_mat[(p, j)] = 1.0;
            }
            let mut h = DVector::zeros(p + 1);
            h[p] = 1.0;
            let binary = kind == PrimitiveKind::BinarySimplex;
            PrimitiveSet::from_parts(
                kind,
                p,
                params.clone(),
                h_mat,
                h,
                vec![Cone::nonneg(p), Cone::zero(1)],
                vec![binary; p],
            )
        }
        PrimitiveKind::Box => {
            let lo = params.lower.unwrap_or(-1.0);
            let hi = params.upper.unwrap_or(1.0);
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(CoreError::InvalidParameter(format!(
                    "box bounds must satisfy lower <= upper, got [{lo}, {hi}]"
                )));
            }
            let mut h_mat = DMatrix::zeros(2 * p, p);
            let mut h = DVector::zeros(2 * p);
            for j in 0..p {
                h_mat[(j, j)] = 1.0;
                h[j] = lo;
                h_mat[(p + j, j)] = -1.0;
                h[p + j] = -hi;
            }
            PrimitiveSet::from_parts(
                kind,
                p,
                PrimitiveParams::bounds(lo, hi),
                h_mat,
                h,
                vec![Cone::nonneg(2 * p)],
                vec![false; p],
            )
        }
        PrimitiveKind::L2Ball => {
            let r = checked_radius(params)?;
            let mut h_mat = DMatrix::zeros(p + 1, p);
            for j in 0..p {
                h_mat[(j + 1, j)] = 1.0;
            }
            let mut h = DVector::zeros(p + 1);
            h[0] = -r;
            PrimitiveSet::from_parts(
                kind,
                p,
                PrimitiveParams::radius(r),
                h_mat,
                h,
                vec![Cone::second_order(p + 1)],
                vec![false; p],
            )
        }
        PrimitiveKind::L1Ball => {
            let r = checked_radius(params)?;
            let q = 3 * p;
            let rows = p + 2 * p + 1;
            let mut h_mat = DMatrix::zeros(rows, q);
            let mut h = DVector::zeros(rows);
            for j in 0..p {
                // z - u + v = 0
                h_mat[(j, j)] = 1.0;
                h_mat[(j, p + j)] = -1.0;
                h_mat[(j, 2 * p + j)] = 1.0;
                // u >= 0, v >= 0
                h_mat[(p + j, p + j)] = 1.0;
                h_mat[(2 * p + j, 2 * p + j)] = 1.0;
                // r - e'(u + v) >= 0
                h_mat[(3 * p, p + j)] = -1.0;
                h_mat[(3 * p, 2 * p + j)] = -1.0;
            }
            h[3 * p] = -r;
            PrimitiveSet::from_parts(
                kind,
                p,
                PrimitiveParams::radius(r),
                h_mat,
                h,
                vec![Cone::zero(p), Cone::nonneg(2 * p + 1)],
                vec![false; q],
            )
        }
        PrimitiveKind::Custom => Err(CoreError::InvalidParameter(
            "custom primitive sets are built with PrimitiveSet::from_parts".into(),
        )),
    }
}

fn checked_radius(params: &PrimitiveParams) -> Result<f64> {
    let r = params.radius.unwrap_or(1.0);
    if !(r.is_finite() && r > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "ball radius must be positive, got {r}"
        )));
    }
    Ok(r)
}

/// JSON layout: explicit matrices as row lists so nonstandard sets round-trip.
#[derive(Serialize, Deserialize)]
struct PrimitiveSetRepr {
    kind: PrimitiveKind,
    dim: usize,
    #[serde(default)]
    params: PrimitiveParams,
    #[serde(rename = "H")]
    h_mat: Vec<Vec<f64>>,
    h: Vec<f64>,
    cones: Vec<Cone>,
    integrality: Vec<bool>,
}

impl From<PrimitiveSet> for PrimitiveSetRepr {
    fn from(set: PrimitiveSet) -> Self {
        PrimitiveSetRepr {
            kind: set.kind,
            dim: set.dim,
            params: set.params,
            h_mat: crate::linalg::matrix_to_rows(&set.h_mat),
            h: set.h.as_slice().to_vec(),
            cones: set.cones,
            integrality: set.integrality,
        }
    }
}

impl TryFrom<PrimitiveSetRepr> for PrimitiveSet {
    type Error = CoreError;

    fn try_from(repr: PrimitiveSetRepr) -> Result<Self> {
        let cols = repr.integrality.len();
        let h_mat = crate::linalg::matrix_from_rows(&repr.h_mat, cols)?;
        PrimitiveSet::from_parts(
            repr.kind,
            repr.dim,
            repr.params,
            h_mat,
            DVector::from_vec(repr.h),
            repr.cones,
            repr.integrality,
        )
    }
}
