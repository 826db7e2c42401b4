//! Row-major count matrices and their per-column sufficient statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::ln_factorial;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    rows: usize,
    cols: usize,
    values: Vec<u32>,
}

impl CountMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<u32>) -> Result<Self> {
        if cols == 0 {
            return Err(invalid("count matrix needs at least one column"));
        }
        if values.len() != rows * cols {
            return Err(invalid(format!("expected {} values for {rows}x{cols}, got {}", rows * cols, values.len())));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u32] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u32]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (s, &x) in sums.iter_mut().zip(r) {
                *s += x as f64;
            }
        }
        sums.iter().map(|s| s / self.rows as f64).collect()
    }
}

/// `Σ_i x_ij` and `Σ_i ln x_ij!` per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub n: usize,
    pub sum_x: Vec<f64>,
    pub sum_ln_factorial: Vec<f64>,
}

impl SufficientStats {
    pub fn from_counts(data: &CountMatrix) -> Self {
        let d = data.cols();
        let mut sum_x = vec![0.0; d];
        let mut sum_ln_factorial = vec![0.0; d];
        for r in data.iter_rows() {
            for j in 0..d {
                sum_x[j] += r[j] as f64;
                sum_ln_factorial[j] += ln_factorial(r[j] as u64);
            }
        }
        Self {
            n: data.rows(),
            sum_x,
            sum_ln_factorial,
        }
    }
}
