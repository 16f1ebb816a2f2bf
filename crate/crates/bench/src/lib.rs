//! Data generators with true-problem oracles, dataset files, named
//! experiment presets and a seeded experiment runner.

pub mod data_io;
pub mod experiment;
pub mod generators;
pub mod presets;
