//! Small dense helpers shared by the serializers and the trainers.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Rebuilds a matrix from row lists. `cols` is used when there are no rows.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(cols, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
