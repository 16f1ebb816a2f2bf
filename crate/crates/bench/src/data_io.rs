//! Noise injection and dataset files: a CSV with header `s_1..s_K,x_1..x_n`
//! and a JSON sidecar holding the metadata and the oracle description.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use invfeas_core::dataset::{DatasetMeta, IODataset};
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::{CoreError, Result};
use invfeas_train::network::NetworkModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::generators::oracle_from_json;

/// Adds iid `N(0, std^2)` to every decision entry; signals and the oracle
/// are kept, so true losses are still measured against the clean problem.
pub fn add_noise(data: &IODataset, std: f64, seed: u64) -> Result<IODataset> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "noise std must be finite and >= 0, got {std}"
        )));
    }
    let mut out = data.clone();
    out.meta.noise_std = std;
    if std == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, std).map_err(|e| CoreError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in &mut out.decisions {
        for v in x.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub meta: DatasetMeta,
    pub n: usize,
    pub k: usize,
    pub len: usize,
    pub oracle: Option<serde_json::Value>,
    /// The known cost `c(s)`.
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    /// Candidate lines and known data, for network studies.
    #[serde(default)]
    pub network: Option<NetworkModel>,
}

/// A dataset read back from disk with whatever its sidecar described.
pub struct LoadedDataset {
    pub data: IODataset,
    pub objective: Option<ObjectiveSpec>,
    pub network: Option<NetworkModel>,
}

/// 17 significant digits round-trip every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_dataset(
    data: &IODataset,
    objective: Option<&ObjectiveSpec>,
    network: Option<&NetworkModel>,
    csv_path: &Path,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let header: Vec<String> = (1..=data.k())
        .map(|i| format!("s_{i}"))
        .chain((1..=data.n()).map(|i| format!("x_{i}")))
        .collect();
    w.write_record(&header)?;
    for (s, x) in data.signals.iter().zip(&data.decisions) {
        w.write_record(s.iter().chain(x).map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    let side = Sidecar {
        meta: data.meta.clone(),
        n: data.n(),
        k: data.k(),
        len: data.len(),
        oracle: data.oracle.as_ref().map(|o| o.describe()),
        objective: objective.cloned(),
        network: network.cloned(),
    };
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_dataset(csv_path: &Path) -> anyhow::Result<LoadedDataset> {
    let mut r = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let header = r.headers()?.clone();
    let k = header.iter().filter(|h| h.starts_with("s_")).count();
    let n = header.iter().filter(|h| h.starts_with("x_")).count();
    if k + n != header.len() {
        bail!("unexpected columns in {}", csv_path.display());
    }
    let mut signals = Vec::new();
    let mut decisions = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("parsing row {} of {}", signals.len() + 1, csv_path.display()))?;
        signals.push(vals[..k].to_vec());
        decisions.push(vals[k..].to_vec());
    }
    let side_path = sidecar_path(csv_path);
    let side = if side_path.exists() {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)
            .with_context(|| format!("parsing {}", side_path.display()))?;
        if side.n != n || side.k != k || side.len != signals.len() {
            bail!(
                "{} does not match the shape of {}",
                side_path.display(),
                csv_path.display()
            );
        }
        side
    } else {
        Sidecar {
            meta: DatasetMeta::default(),
            n,
            k,
            len: signals.len(),
            oracle: None,
            objective: None,
            network: None,
        }
    };
    let oracle = side.oracle.as_ref().map(oracle_from_json).transpose()?;
    let mut data = IODataset::new(signals, decisions, side.meta)?;
    if let Some(o) = oracle {
        data = data.with_oracle(o);
    }
    Ok(LoadedDataset {
        data,
        objective: side.objective,
        network: side.network,
    })
}
