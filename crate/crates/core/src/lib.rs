//! Learning the feasible region of a parametric linear program from
//! observed (signal, decision) pairs.
//!
//! The hypothesis class maps a fixed conic primitive set `Z` through an
//! affine-in-signal transformation, `x = A(s) z + b(s)`, and the forward
//! problem is `min c(s)'x` over that image. This crate holds the geometry,
//! the hypothesis, a conic solver contract, the forward problem and the
//! point-wise losses; training lives in `invfeas-train`.

pub mod dataset;
pub mod decision_set;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod hypothesis;
pub mod linalg;
pub mod losses;
pub mod norms;
pub mod serde_inf;
pub mod solver;

pub use error::{CoreError, Result};
