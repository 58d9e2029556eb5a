//! Compressed-sparse-row matrices for adjacency structure.
//!
//! Weights are restricted to (0, 1]: explicit zeros are never stored, and
//! every weight this pipeline produces (unit edges, normalized propagation
//! coefficients, inserted link scores) lies in that interval.

use crate::error::{Error, Result};
use crate::numkernel::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            weights: vec![1.0; n],
        }
    }

    /// Build from (row, col, weight) triplets. Triplets are sorted; duplicate
    /// (row, col) positions are rejected, as are weights outside (0, 1].
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, w) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::Validation(format!(
                    "entry ({}, {}) outside {}x{} matrix",
                    r, c, rows, cols
                )));
            }
            if !w.is_finite() || w <= 0.0 || w > 1.0 {
                return Err(Error::Validation(format!(
                    "weight {} at ({}, {}) outside (0, 1]",
                    w, r, c
                )));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for pair in triplets.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::Validation(format!(
                    "duplicate edge at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut row_offsets = vec![0usize; rows + 1];
        for &(r, _, _) in &triplets {
            row_offsets[r + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = triplets.iter().map(|t| t.1).collect();
        let weights = triplets.iter().map(|t| t.2).collect();
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Column indices and weights of row `r`, indices strictly increasing.
    pub fn row_entries(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.weights[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, weights) = self.row_entries(r);
        match cols.binary_search(&c) {
            Ok(pos) => weights[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, weights) = self.row_entries(r);
            cols.iter().zip(weights).map(move |(&c, &w)| (r, c, w))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && self
                .iter_entries()
                .all(|(r, c, w)| self.get(c, r).to_bits() == w.to_bits())
    }

    pub fn densify(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, w) in self.iter_entries() {
            out.set(r, c, w);
        }
        out
    }

    /// Weighted degree of each row: `sum_j s[r, j]`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row_entries(r).1.iter().sum())
            .collect()
    }
}

/// Sparse-dense product `s * d`. Per output row, contributions are added in
/// ascending column order (fixed reduction order, bitwise deterministic).
pub fn spmm(s: &SparseMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols != d.rows() {
        return Err(Error::Dimension(format!(
            "spmm: {}x{} * {}x{}",
            s.rows,
            s.cols,
            d.rows(),
            d.cols()
        )));
    }
    let n = d.cols();
    let mut out = DenseMatrix::zeros(s.rows, n);
    for r in 0..s.rows {
        let (cols, weights) = s.row_entries(r);
        let out_row = out.row_mut(r);
        for (&c, &w) in cols.iter().zip(weights) {
            let d_row = d.row(c);
            for (o, &dv) in out_row.iter_mut().zip(d_row) {
                *o += w * dv;
            }
        }
    }
    Ok(out)
}

/// `s^T * d`, the backward rule for [`spmm`] with `s` held constant.
/// Scatter order follows the forward CSR traversal, so it is deterministic.
pub fn spmm_transpose(s: &SparseMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if s.rows != d.rows() {
        return Err(Error::Dimension(format!(
            "spmm_transpose: ({}x{})^T * {}x{}",
            s.rows,
            s.cols,
            d.rows(),
            d.cols()
        )));
    }
    let n = d.cols();
    let mut out = DenseMatrix::zeros(s.cols, n);
    for r in 0..s.rows {
        let (cols, weights) = s.row_entries(r);
        let d_row = d.row(r);
        for (&c, &w) in cols.iter().zip(weights) {
            let out_row = out.row_mut(c);
            for (o, &dv) in out_row.iter_mut().zip(d_row) {
                *o += w * dv;
            }
        }
    }
    Ok(out)
}
