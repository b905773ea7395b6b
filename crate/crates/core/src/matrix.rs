//! Compressed sparse row matrices and a dense-or-sparse data matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("row pointer array has length {got}, expected {expected}")]
    RowPtrLength { expected: usize, got: usize },
    #[error("row pointers are not monotone or do not match the entry count")]
    RowPtrInvalid,
    #[error("column index {col} out of range in row {row} (n_cols = {n_cols})")]
    ColumnOutOfRange { row: usize, col: usize, n_cols: usize },
    #[error("column indices in row {row} are not strictly increasing")]
    UnsortedRow { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        if row_ptr.len() != n_rows + 1 {
            return Err(MatrixError::RowPtrLength { expected: n_rows + 1, got: row_ptr.len() });
        }
        if row_ptr[0] != 0
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || row_ptr[n_rows] != col_idx.len()
            || col_idx.len() != values.len()
        {
            return Err(MatrixError::RowPtrInvalid);
        }
        for row in 0..n_rows {
            let cols = &col_idx[row_ptr[row]..row_ptr[row + 1]];
            if let Some(&col) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(MatrixError::ColumnOutOfRange { row, col, n_cols });
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MatrixError::UnsortedRow { row });
            }
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Drops exact zeros.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: m.nrows(), n_cols: m.ncols(), row_ptr, col_idx, values }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_rows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_cols);
        for i in 0..self.n_rows {
            let yi = y[i];
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let pos = next[j];
                col_idx[pos] = i;
                values[pos] = v;
                next[j] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    /// Multiplies row `i` by `s[i]`.
    pub fn scale_rows(&mut self, s: &DVector<f64>) {
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= s[i];
            }
        }
    }
}

/// A data matrix stored densely or in CSR form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataMatrix {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl DataMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.nrows(),
            DataMatrix::Sparse(m) => m.n_rows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.ncols(),
            DataMatrix::Sparse(m) => m.n_cols(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(m) => m * x,
            DataMatrix::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(m) => m.tr_mul(y),
            DataMatrix::Sparse(m) => m.tr_mul_vec(y),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DataMatrix::Dense(m) => m.clone(),
            DataMatrix::Sparse(m) => m.to_dense(),
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            DataMatrix::Dense(m) => DataMatrix::Dense(m.transpose()),
            DataMatrix::Sparse(m) => DataMatrix::Sparse(m.transpose()),
        }
    }

    /// Dense copy of the columns listed in `cols`, in order.
    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        match self {
            DataMatrix::Dense(m) => m.select_columns(cols),
            DataMatrix::Sparse(m) => {
                let mut pos = vec![usize::MAX; m.n_cols()];
                for (k, &c) in cols.iter().enumerate() {
                    pos[c] = k;
                }
                let mut out = DMatrix::zeros(m.n_rows(), cols.len());
                for i in 0..m.n_rows() {
                    for (j, v) in m.row(i) {
                        if pos[j] != usize::MAX {
                            out[(i, pos[j])] = v;
                        }
                    }
                }
                out
            }
        }
    }
}
