//! Paired signals and decisions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::losses::TrueProblemOracle;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    pub noise_std: f64,
    pub split: Split,
    /// Samples redrawn because of a measure-zero tie.
    pub regenerated: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IODataset {
    /// `N` rows of length `K`.
    pub signals: Vec<Vec<f64>>,
    /// `N` rows of length `n`.
    pub decisions: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
    pub oracle: Option<Arc<dyn TrueProblemOracle>>,
}

impl IODataset {
    pub fn new(signals: Vec<Vec<f64>>, decisions: Vec<Vec<f64>>, meta: DatasetMeta) -> Result<Self> {
        let data = IODataset {
            signals,
            decisions,
            meta,
            oracle: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn with_oracle(mut self, oracle: Arc<dyn TrueProblemOracle>) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.signals.len() != self.decisions.len() {
            return Err(CoreError::Dimension(format!(
                "{} signals but {} decisions",
                self.signals.len(),
                self.decisions.len()
            )));
        }
        let k = self.signals.first().map_or(0, Vec::len);
        let n = self.decisions.first().map_or(0, Vec::len);
        if self.signals.iter().any(|r| r.len() != k) || self.decisions.iter().any(|r| r.len() != n) {
            return Err(CoreError::Dimension("ragged dataset rows".into()));
        }
        let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|v| v.is_finite());
        if !finite(&self.signals) || !finite(&self.decisions) {
            return Err(CoreError::InvalidParameter(
                "dataset contains non-finite entries".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    /// Signal dimension `K`.
    pub fn k(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    /// Decision dimension `n`.
    pub fn n(&self) -> usize {
        self.decisions.first().map_or(0, Vec::len)
    }

    /// The rows at `indices`, sharing the oracle.
    pub fn subset(&self, indices: &[usize]) -> Self {
        IODataset {
            signals: indices.iter().map(|&i| self.signals[i].clone()).collect(),
            decisions: indices.iter().map(|&i| self.decisions[i].clone()).collect(),
            meta: self.meta.clone(),
            oracle: self.oracle.clone(),
        }
    }
}
