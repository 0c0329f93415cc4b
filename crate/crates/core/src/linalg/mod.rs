//! Dense and sparse linear algebra for the spectral estimators.
//!
//! - [`svd_truncated`]: top singular triplets.
//! - [`count_singvals_above`]: number of singular values `≥ γ` from the
//!   inertia of `AᵀA − γ²I`, via a Bunch–Kaufman `LDLᵀ` factorization.
//! - [`embed`] / [`lowrank_rows`]: the `2r`-column spectral embedding and the
//!   matching rank-`r` approximation.

mod embedding;
mod inertia;
mod svd;

pub use embedding::{embed, lowrank_rows, Embedding, LowRankPair};
pub use inertia::{
    count_singvals_above, count_singvals_above_by_svd, symmetric_inertia, Inertia,
    INERTIA_REL_TOL,
};
pub use svd::{svd_truncated, svd_truncated_with, SvdMethod, SvdResult, DENSE_SVD_MAX_DIM};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("requested rank {requested} is outside 1..={available}")]
    InvalidRank { requested: usize, available: usize },
    #[error("iterative SVD did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("LDL^T factorization broke down at column {0}")]
    FactorizationBreakdown(usize),
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("eigenvalue computation failed")]
    EigenFailure,
}

/// Read-only access to a real matrix, enough for the spectral routines.
pub trait MatrixOp {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A x`.
    fn mul_vec(&self, x: &[f64]) -> Vec<f64>;
    /// `Aᵀ y`.
    fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64>;
    /// `AᵀA`, dense.
    fn gram(&self) -> DMatrix<f64>;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl MatrixOp for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.shape().0
    }
    fn ncols(&self) -> usize {
        self.shape().1
    }
    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (self * nalgebra::DVector::from_column_slice(x))
            .as_slice()
            .to_vec()
    }
    fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        self.tr_mul(&nalgebra::DVector::from_column_slice(y))
            .as_slice()
            .to_vec()
    }
    fn gram(&self) -> DMatrix<f64> {
        self.tr_mul(self)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Triplets must be sorted by `(row, col)` without duplicates.
    pub fn from_sorted_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, j, v) in triplets {
            debug_assert!(i < nrows && j < ncols);
            indptr[i + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let triplets = (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .filter_map(|(i, j)| (m[(i, j)] != 0.0).then(|| (i, j, m[(i, j)])));
        Self::from_sorted_triplets(r, c, triplets)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }
}

impl MatrixOp for CsrMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }
    fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }
    fn gram(&self) -> DMatrix<f64> {
        let n = self.ncols;
        // Outer products of rows are cheap while rows stay short; long rows
        // go through the dense product.
        if self.nnz() > 32 * self.nrows.max(1) {
            let dense = self.to_dense();
            return dense.tr_mul(&dense);
        }
        let mut g = DMatrix::<f64>::zeros(n, n);
        for i in 0..self.nrows {
            let span = self.indptr[i]..self.indptr[i + 1];
            let cols = &self.indices[span.clone()];
            let vals = &self.values[span];
            for (a, &ja) in cols.iter().enumerate() {
                for (b, &jb) in cols.iter().enumerate() {
                    g[(ja, jb)] += vals[a] * vals[b];
                }
            }
        }
        g
    }
    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}
