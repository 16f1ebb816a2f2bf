//! Trainers for the conic hypothesis class.

pub mod bcd;
pub mod config;
pub mod convex;
pub mod inner;
pub mod milp_simplex;
pub mod mip;
pub mod network;
pub mod registry;
pub mod regression;

pub use config::{LossKind, TrainConfig, TrainReport};
