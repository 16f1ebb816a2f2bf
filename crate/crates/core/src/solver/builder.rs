use std::collections::BTreeMap;
use std::ops::Range;

use super::{ConicProgram, ConstraintBlock, Row};
use crate::geometry::Cone;

/// Incremental, row-oriented construction of a [`ConicProgram`].
#[derive(Clone, Debug, Default)]
pub struct ProgramBuilder {
    num_vars: usize,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
    blocks: Vec<ConstraintBlock>,
    bounds: Vec<(f64, f64)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_vars(&mut self, count: usize) -> Range<usize> {
        let start = self.num_vars;
        self.num_vars += count;
        self.linear.resize(self.num_vars, 0.0);
        self.bounds.resize(self.num_vars, (f64::NEG_INFINITY, f64::INFINITY));
        start..self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.add_vars(1).start
    }

    /// Adds `c * v_j` to the objective.
    pub fn add_cost(&mut self, j: usize, c: f64) {
        self.linear[j] += c;
    }

    pub fn add_offset(&mut self, c: f64) {
        self.offset += c;
    }

    /// Adds `w * v_i * v_j` to the objective (`w * v_i^2` when `i == j`).
    pub fn add_product_cost(&mut self, i: usize, j: usize, w: f64) {
        let key = (i.min(j), i.max(j));
        // Objective is 1/2 v'Qv: a diagonal entry contributes q/2 v_i^2 and an
        // off-diagonal pair contributes q v_i v_j.
        let q = if i == j { 2.0 * w } else { w };
        *self.quadratic.entry(key).or_insert(0.0) += q;
    }

    pub fn add_square_cost(&mut self, i: usize, w: f64) {
        self.add_product_cost(i, i, w);
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    pub fn set_lower(&mut self, j: usize, lo: f64) {
        self.bounds[j].0 = lo;
    }

    /// Adds the block `rows ∈ cone` and returns its index.
    pub fn add_block(&mut self, cone: Cone, rows: Vec<Row>) -> usize {
        debug_assert_eq!(cone.dim, rows.len());
        self.blocks.push(ConstraintBlock { cone, rows });
        self.blocks.len() - 1
    }

    /// `row = 0`.
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_block(Cone::zero(1), vec![Row::new(terms, rhs)])
    }

    /// `row >= 0`.
    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_block(Cone::nonneg(1), vec![Row::new(terms, rhs)])
    }

    pub fn build(self) -> ConicProgram {
        ConicProgram {
            num_vars: self.num_vars,
            linear: self.linear,
            quadratic: self
                .quadratic
                .into_iter()
                .filter(|&(_, q)| q != 0.0)
                .map(|((i, j), q)| (i, j, q))
                .collect(),
            offset: self.offset,
            blocks: self.blocks,
            var_bounds: self.bounds,
        }
    }
}
