//! Data generators, each paired with the true forward problem it samples.

use std::collections::BTreeMap;
use std::sync::Arc;

use invfeas_core::dataset::{DatasetMeta, IODataset, Split};
use invfeas_core::decision_set::DecisionSet;
use invfeas_core::forward::ObjectiveSpec;
use invfeas_core::geometry::Cone;
use invfeas_core::hypothesis::complete_graph_candidates;
use invfeas_core::losses::TrueProblemOracle;
use invfeas_core::solver::SolveOptions;
use invfeas_core::{CoreError, Result};
use invfeas_train::network::NetworkModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Redraws allowed per sample before giving up.
const MAX_REDRAWS: usize = 1000;

/// Generator knobs; each generator reads the ones it understands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Decision dimension (synthetic L1 ball).
    pub n: Option<usize>,
    /// Cost coefficient range (synthetic L1 ball).
    pub cost_range: Option<(f64, f64)>,
    /// Ball center (default all ones).
    pub e: Option<Vec<f64>>,
    /// Ball radius (default 1).
    pub h: Option<f64>,
    /// Lines of the generating network, 0-based node pairs.
    pub topology: Option<Vec<(usize, usize)>>,
}

pub struct Generated {
    pub train: IODataset,
    pub test: IODataset,
    pub obj: ObjectiveSpec,
    pub oracle: Arc<dyn TrueProblemOracle>,
    /// Candidate lines and known data, for network generators.
    pub network: Option<NetworkModel>,
}

pub trait DataGenerator: Send + Sync {
    fn name(&self) -> &'static str;

    fn generate(&self, params: &GeneratorParams, n_train: usize, n_test: usize, seed: u64) -> Result<Generated>;
}

/// Independent stream for one split of one seed.
pub fn sub_seed(seed: u64, split: Split) -> u64 {
    let tag = match split {
        Split::Train => 0x5452_4149_4e00_0001u64,
        Split::Test => 0x5445_5354_0000_0002u64,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag
}

fn meta(generator: &str, seed: u64, split: Split, regenerated: usize) -> DatasetMeta {
    DatasetMeta {
        generator: generator.to_string(),
        seed,
        noise_std: 0.0,
        split,
        regenerated,
    }
}

/// Draws `count` samples; `draw` returns `None` for a sample that must be
/// redrawn (a tie or an infeasible signal).
fn sample_split<F>(name: &str, count: usize, seed: u64, split: Split, mut draw: F) -> Result<IODataset>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<Option<(Vec<f64>, Vec<f64>)>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, split));
    let mut signals = Vec::with_capacity(count);
    let mut decisions = Vec::with_capacity(count);
    let mut redrawn = 0;
    while signals.len() < count {
        match draw(&mut rng)? {
            Some((s, x)) => {
                signals.push(s);
                decisions.push(x);
            }
            None => {
                redrawn += 1;
                if redrawn > MAX_REDRAWS * count.max(1) {
                    return Err(CoreError::InvalidParameter(format!("{name}: too many redrawn samples")));
                }
            }
        }
    }
    IODataset::new(signals, decisions, meta(name, seed, split, redrawn))
}

// ---------------------------------------------------------------- toy

/// `min s x1 + (1 - s) x2  s.t.  x1 + x2 = 1,  0 <= x <= 2`.
#[derive(Clone, Debug, Default)]
pub struct ToyOracle;

impl ToyOracle {
    pub fn objective() -> ObjectiveSpec {
        ObjectiveSpec::Affine {
            c0: vec![0.0, 1.0],
            c: vec![vec![1.0], vec![-1.0]],
        }
    }
}

impl TrueProblemOracle for ToyOracle {
    fn cost(&self, s: &[f64]) -> Result<Vec<f64>> {
        Self::objective().cost(s)
    }

    fn decision_set(&self, _s: &[f64]) -> Result<DecisionSet> {
        let gx = DMatrix::from_row_slice(5, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let g = DVector::from_vec(vec![1.0, 0.0, 0.0, -2.0, -2.0]);
        DecisionSet::new(gx, DMatrix::zeros(5, 0), g, vec![Cone::zero(1), Cone::nonneg(4)])
    }

    fn describe(&self) -> serde_json::Value {
        json!({"kind": "toy"})
    }
}

pub struct Toy;

impl DataGenerator for Toy {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn generate(&self, _params: &GeneratorParams, n_train: usize, n_test: usize, seed: u64) -> Result<Generated> {
        let draw = |rng: &mut ChaCha8Rng| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let s: f64 = rng.gen_range(0.0..1.0);
            Ok(match s.partial_cmp(&0.5) {
                Some(std::cmp::Ordering::Less) => Some((vec![s], vec![1.0, 0.0])),
                Some(std::cmp::Ordering::Greater) => Some((vec![s], vec![0.0, 1.0])),
                _ => None,
            })
        };
        let oracle: Arc<dyn TrueProblemOracle> = Arc::new(ToyOracle);
        Ok(Generated {
            train: sample_split("toy", n_train, seed, Split::Train, draw)?.with_oracle(oracle.clone()),
            test: sample_split("toy", n_test, seed, Split::Test, draw)?.with_oracle(oracle.clone()),
            obj: ToyOracle::objective(),
            oracle,
            network: None,
        })
    }
}

// ---------------------------------------------------------------- L1 ball

/// `min c'x  s.t.  ||x - e||_1 <= h` with `c` the signal.
#[derive(Clone, Debug, PartialEq)]
pub struct L1BallOracle {
    pub e: Vec<f64>,
    pub h: f64,
}

impl TrueProblemOracle for L1BallOracle {
    fn cost(&self, s: &[f64]) -> Result<Vec<f64>> {
        ObjectiveSpec::leading_signals(self.e.len()).cost(s)
    }

    /// `x - u + v = e`, `u, v >= 0`, `h - e'(u + v) >= 0`.
    fn decision_set(&self, _s: &[f64]) -> Result<DecisionSet> {
        let n = self.e.len();
        let rows = n + 2 * n + 1;
        let mut gx = DMatrix::zeros(rows, n);
        let mut gw = DMatrix::zeros(rows, 2 * n);
        let mut g = DVector::zeros(rows);
        for j in 0..n {
            gx[(j, j)] = 1.0;
            gw[(j, j)] = -1.0;
            gw[(j, n + j)] = 1.0;
            g[j] = self.e[j];
            gw[(n + j, j)] = 1.0;
            gw[(2 * n + j, n + j)] = 1.0;
            gw[(3 * n, j)] = -1.0;
            gw[(3 * n, n + j)] = -1.0;
        }
        g[3 * n] = -self.h;
        DecisionSet::new(gx, gw, g, vec![Cone::zero(n), Cone::nonneg(2 * n + 1)])
    }

    fn describe(&self) -> serde_json::Value {
        json!({"kind": "l1_ball", "e": self.e, "h": self.h})
    }
}

/// The minimizing vertex `e - h sign(c_j) e_j` with `j = argmax |c_j|`, or
/// `None` on a tie (or `c = 0`).
pub fn l1_ball_vertex(c: &[f64], e: &[f64], h: f64) -> Option<Vec<f64>> {
    let mags: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    let top = mags.iter().copied().fold(0.0, f64::max);
    if top == 0.0 || mags.iter().filter(|&&m| m == top).count() > 1 {
        return None;
    }
    let j = mags.iter().position(|&m| m == top)?;
    let mut x = e.to_vec();
    x[j] -= h * c[j].signum();
    Some(x)
}

pub struct SyntheticL1;

impl DataGenerator for SyntheticL1 {
    fn name(&self) -> &'static str {
        "synthetic_l1"
    }

    fn generate(&self, params: &GeneratorParams, n_train: usize, n_test: usize, seed: u64) -> Result<Generated> {
        let n = params.n.or(params.e.as_ref().map(Vec::len)).unwrap_or(2);
        let e = params.e.clone().unwrap_or_else(|| vec![1.0; n]);
        let h = params.h.unwrap_or(1.0);
        let (lo, hi) = params.cost_range.unwrap_or((-1.0, 1.0));
        if e.len() != n || n == 0 {
            return Err(CoreError::Dimension(format!(
                "center has {} entries for n = {n}",
                e.len()
            )));
        }
        if !(h > 0.0) || !(lo < hi) {
            return Err(CoreError::InvalidParameter(
                "need h > 0 and a non-empty cost range".into(),
            ));
        }
        let draw = |rng: &mut ChaCha8Rng| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
            Ok(l1_ball_vertex(&c, &e, h).map(|x| (c, x)))
        };
        let oracle: Arc<dyn TrueProblemOracle> = Arc::new(L1BallOracle { e: e.clone(), h });
        Ok(Generated {
            train: sample_split("synthetic_l1", n_train, seed, Split::Train, draw)?.with_oracle(oracle.clone()),
            test: sample_split("synthetic_l1", n_test, seed, Split::Test, draw)?.with_oracle(oracle.clone()),
            obj: ObjectiveSpec::leading_signals(n),
            oracle,
            network: None,
        })
    }
}

// ---------------------------------------------------------------- networks

/// A network study: the generating network plus signal ranges, costs first.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkStudy {
    pub name: &'static str,
    pub truth: NetworkModel,
    pub cost_ranges: Vec<(f64, f64)>,
    pub demand_ranges: Vec<(f64, f64)>,
}

/// Ring 0-1-2-3-4-0 (a connected 5-line layout); generators at 0, 2, 4.
pub const POWER5_RING: [(usize, usize); 5] = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)];

pub fn power5(topology: Option<&[(usize, usize)]>) -> NetworkStudy {
    let candidates = complete_graph_candidates(5);
    let lines = topology.unwrap_or(&POWER5_RING);
    let selected = candidates
        .iter()
        .map(|&(u, v)| lines.iter().any(|&(a, b)| (a, b) == (u, v) || (b, a) == (u, v)))
        .collect();
    NetworkStudy {
        name: "power5",
        truth: NetworkModel {
            nodes: 5,
            candidates,
            selected,
            generator_nodes: vec![0, 2, 4],
            generator_capacity: vec![3.5; 3],
            line_capacity: 3.5,
            cost_signals: vec![0, 1, 2],
            demand_signals: vec![3, 4, 5, 6, 7],
        },
        cost_ranges: vec![(0.2, 1.0), (0.2, 0.5), (1.0, 2.0)],
        demand_ranges: vec![(0.3, 1.5), (0.36, 1.8), (0.42, 2.1), (0.48, 2.4), (0.54, 2.7)],
    }
}

/// The 20 branches of the IEEE 14-bus system, 0-based.
pub const IEEE14_BRANCHES: [(usize, usize); 20] = [
    (0, 1),
    (0, 4),
    (1, 2),
    (1, 3),
    (1, 4),
    (2, 3),
    (3, 4),
    (3, 6),
    (3, 8),
    (4, 5),
    (5, 10),
    (5, 11),
    (5, 12),
    (6, 7),
    (6, 8),
    (8, 9),
    (8, 13),
    (9, 10),
    (11, 12),
    (12, 13),
];

/// Generators at buses 2, 8 and 13 (1-based), in that order.
pub fn ieee14(topology: Option<&[(usize, usize)]>) -> NetworkStudy {
    let candidates: Vec<(usize, usize)> = topology.unwrap_or(&IEEE14_BRANCHES).to_vec();
    let m = candidates.len();
    NetworkStudy {
        name: "ieee14",
        truth: NetworkModel {
            nodes: 14,
            candidates,
            selected: vec![true; m],
            generator_nodes: vec![1, 7, 12],
            generator_capacity: vec![3.6; 3],
            line_capacity: 3.0,
            cost_signals: vec![0, 1, 2],
            demand_signals: (3..17).collect(),
        },
        cost_ranges: vec![(0.2, 0.5), (1.0, 2.0), (0.2, 1.0)],
        demand_ranges: vec![
            (0.14, 0.7),
            (0.14, 0.7),
            (0.16, 0.8),
            (0.16, 0.8),
            (0.14, 0.7),
            (0.1, 0.5),
            (0.16, 0.8),
            (0.54, 2.7),
            (0.1, 0.2),
            (0.12, 0.6),
            (0.12, 0.6),
            (0.1, 0.5),
            (0.1, 0.5),
            (0.12, 0.6),
        ],
    }
}

fn generate_network(study: NetworkStudy, n_train: usize, n_test: usize, seed: u64) -> Result<Generated> {
    let truth = study.truth.clone();
    truth.validate()?;
    let opts = SolveOptions::default();
    let ranges: Vec<(f64, f64)> = study.cost_ranges.iter().chain(&study.demand_ranges).copied().collect();
    let draw = |rng: &mut ChaCha8Rng| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let s: Vec<f64> = ranges.iter().map(|&(a, b)| rng.gen_range(a..b)).collect();
        let set = truth.decision_set(&s)?;
        let sol = set.minimize(&truth.cost(&s)?, &opts)?;
        Ok(match sol.status {
            invfeas_core::solver::SolveStatus::Optimal => Some((s, sol.x)),
            invfeas_core::solver::SolveStatus::Infeasible => None,
            other => {
                return Err(CoreError::Solver(format!(
                    "{} dispatch ended with status {other:?}",
                    study.name
                )));
            }
        })
    };
    let oracle: Arc<dyn TrueProblemOracle> = Arc::new(truth.clone());
    Ok(Generated {
        train: sample_split(study.name, n_train, seed, Split::Train, draw)?.with_oracle(oracle.clone()),
        test: sample_split(study.name, n_test, seed, Split::Test, draw)?.with_oracle(oracle.clone()),
        obj: ObjectiveSpec::leading_signals(truth.num_generators()),
        oracle,
        network: Some(truth),
    })
}

pub struct Power5;

impl DataGenerator for Power5 {
    fn name(&self) -> &'static str {
        "power5"
    }

    fn generate(&self, params: &GeneratorParams, n_train: usize, n_test: usize, seed: u64) -> Result<Generated> {
        generate_network(power5(params.topology.as_deref()), n_train, n_test, seed)
    }
}

pub struct Ieee14;

impl DataGenerator for Ieee14 {
    fn name(&self) -> &'static str {
        "ieee14"
    }

    fn generate(&self, params: &GeneratorParams, n_train: usize, n_test: usize, seed: u64) -> Result<Generated> {
        generate_network(ieee14(params.topology.as_deref()), n_train, n_test, seed)
    }
}

/// Rebuilds an oracle from its `describe()` output.
pub fn oracle_from_json(v: &serde_json::Value) -> Result<Arc<dyn TrueProblemOracle>> {
    let bad = |m: &str| CoreError::InvalidParameter(format!("oracle description: {m}"));
    match v.get("kind").and_then(|k| k.as_str()) {
        Some("toy") => Ok(Arc::new(ToyOracle)),
        Some("l1_ball") => {
            let e: Vec<f64> = serde_json::from_value(v["e"].clone()).map_err(|_| bad("bad center"))?;
            let h = v["h"].as_f64().ok_or_else(|| bad("bad radius"))?;
            Ok(Arc::new(L1BallOracle { e, h }))
        }
        Some("network") => {
            let m: NetworkModel = serde_json::from_value(v["model"].clone()).map_err(|_| bad("bad network"))?;
            m.validate()?;
            Ok(Arc::new(m))
        }
        _ => Err(bad("unknown kind")),
    }
}

pub struct GeneratorRegistry {
    generators: BTreeMap<&'static str, Box<dyn DataGenerator>>,
}

impl GeneratorRegistry {
    pub fn with_defaults() -> Self {
        let mut r = GeneratorRegistry {
            generators: BTreeMap::new(),
        };
        r.register(Box::new(Toy));
        r.register(Box::new(SyntheticL1));
        r.register(Box::new(Power5));
        r.register(Box::new(Ieee14));
        r
    }

    pub fn register(&mut self, g: Box<dyn DataGenerator>) {
        self.generators.insert(g.name(), g);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DataGenerator> {
        self.generators.get(name).map(|g| g.as_ref()).ok_or_else(|| {
            CoreError::InvalidParameter(format!(
                "unknown generator `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.generators.keys().copied().collect()
    }
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
