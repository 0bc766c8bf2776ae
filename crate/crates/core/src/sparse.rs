//! Compressed sparse row storage with a fixed, shared index pattern.
//!
//! Spar-* iterates keep one pattern (the distinct sampled cells) for the whole
//! solve; kernels, plans, and cost matrices are value vectors over it.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{GwError, Result};

/// Sorted, duplicate-free set of cells of an `rows x cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePattern {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    // column-major view: positions into the row-major value vector
    col_ptr: Vec<usize>,
    col_pos: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from arbitrary cells. Duplicates are collapsed.
    pub fn from_cells<I>(rows: usize, cols: usize, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut flat = Vec::new();
        for (i, j) in cells {
            if i >= rows || j >= cols {
                return Err(GwError::IndexOutOfRange {
                    row: i,
                    col: j,
                    rows,
                    cols,
                });
            }
            flat.push(i * cols + j);
        }
        flat.sort_unstable();
        flat.dedup();
        Ok(Self::from_sorted_flat(rows, cols, &flat))
    }

    /// Every cell of the matrix.
    pub fn full(rows: usize, cols: usize) -> Self {
        let flat: Vec<usize> = (0..rows * cols).collect();
        Self::from_sorted_flat(rows, cols, &flat)
    }

    fn from_sorted_flat(rows: usize, cols: usize, flat: &[usize]) -> Self {
        let nnz = flat.len();
        let mut row_ptr = vec![0usize; rows + 1];
        let mut row_idx = Vec::with_capacity(nnz);
        let mut col_idx = Vec::with_capacity(nnz);
        for &f in flat {
            let (i, j) = (f / cols, f % cols);
            row_ptr[i + 1] += 1;
            row_idx.push(i);
            col_idx.push(j);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_ptr = vec![0usize; cols + 1];
        for &j in &col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut col_pos = vec![0usize; nnz];
        for (k, &j) in col_idx.iter().enumerate() {
            col_pos[next[j]] = k;
            next[j] += 1;
        }
        Self {
            rows,
            cols,
            row_ptr,
            row_idx,
            col_idx,
            col_ptr,
            col_pos,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Range of value positions stored in row `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Value positions stored in column `j`, in increasing row order.
    pub fn col_positions(&self, j: usize) -> &[usize] {
        &self.col_pos[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Position of cell `(i, j)` in the value vector, if stored.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.rows {
            return None;
        }
        let range = self.row_range(i);
        self.col_idx[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|off| range.start + off)
    }

    /// `(position, row, col)` triples in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .enumerate()
            .map(|(k, (&i, &j))| (k, i, j))
    }
}

/// Values over a shared [`SparsePattern`]. Cells outside the pattern are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(pattern: Arc<SparsePattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(GwError::DimensionMismatch {
                what: "sparse values",
                expected: pattern.nnz(),
                found: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Stores every cell of a dense matrix, zeros included.
    pub fn from_dense_full(dense: &Array2<f64>) -> Self {
        let (rows, cols) = dense.dim();
        let pattern = Arc::new(SparsePattern::full(rows, cols));
        let values = dense.iter().copied().collect();
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.pattern.rows(), self.pattern.cols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Number of stored cells holding a nonzero value.
    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.rows())
            .map(|i| p.row_range(i).map(|k| self.values[k] * x[p.col_idx[k]]).sum())
            .collect()
    }

    /// `self^T * y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.cols())
            .map(|j| {
                p.col_positions(j)
                    .iter()
                    .map(|&k| self.values[k] * y[p.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.rows())
            .map(|i| self.values[p.row_range(i)].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.cols())
            .map(|j| p.col_positions(j).iter().map(|&k| self.values[k]).sum())
            .collect()
    }

    /// `diag(u) * self * diag(v)` on the same pattern.
    pub fn scale(&self, u: &[f64], v: &[f64]) -> Self {
        let p = &self.pattern;
        let values = p.iter().map(|(k, i, j)| u[i] * self.values[k] * v[j]).collect();
        Self {
            pattern: Arc::clone(&self.pattern),
            values,
        }
    }

    /// Frobenius inner product with another matrix on the same pattern.
    pub fn dot(&self, other: &SparseMatrix) -> f64 {
        debug_assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.shape());
        for (k, i, j) in self.pattern.iter() {
            out[[i, j]] = self.values[k];
        }
        out
    }
}
