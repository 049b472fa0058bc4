//! Small dense/sparse linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::{Error, Result};

/// Compressed sparse row matrix with `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions
    /// are rejected so that the stored entry count is exact.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if prev == Some((r, c)) {
                return Err(Error::InvalidArgument(format!("duplicate sparse entry ({r}, {c})")));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (r, self.col_idx[p], self.values[p]))
        })
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.cols);
        DVector::from_fn(self.rows, |r, _| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|p| self.values[p] * x[self.col_idx[p]])
                .sum()
        })
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = DVector::zeros(self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[p]] += self.values[p] * yr;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}

/// A linear map `M`, stored densely or sparsely.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Operator {
    pub fn rows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Operator::Dense(m) => m.ncols(),
            Operator::Sparse(m) => m.cols(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Dense(m) => m * x,
            Operator::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Dense(m) => m.tr_mul(y),
            Operator::Sparse(m) => m.tr_mul_vec(y),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(m) => m.to_dense(),
        }
    }

    /// `MᵀM`, dense.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.to_dense();
        d.tr_mul(&d)
    }

    /// `MMᵀ`, dense.
    pub fn outer_gram(&self) -> DMatrix<f64> {
        let d = self.to_dense();
        &d * d.transpose()
    }
}

/// Largest eigenvalue of `MᵀM` by power iteration, stopping once the
/// Rayleigh quotient changes by less than `tol` (relative).
pub fn gram_lambda_max(op: &Operator, tol: f64) -> f64 {
    let n = op.cols();
    if n == 0 || op.rows() == 0 {
        return 0.0;
    }
    // Deterministic, generic start: not orthogonal to any eigenvector in practice.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin());
    let nv = v.norm();
    v /= nv;
    let mut estimate = 0.0_f64;
    for _ in 0..50_000 {
        let w = op.apply_transpose(&op.apply(&v));
        let rq = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (rq - estimate).abs() <= tol * rq.abs().max(f64::MIN_POSITIVE) {
            return rq;
        }
        estimate = rq;
    }
    estimate
}

/// Smallest eigenvalue of `MᵀM`. Zero whenever `M` has fewer rows than columns.
pub fn gram_lambda_min(op: &Operator) -> f64 {
    if op.rows() < op.cols() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(op.gram());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
}

/// Factorization of a symmetric (possibly indefinite) matrix.
#[derive(Debug, Clone)]
pub enum SymmetricFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl SymmetricFactor {
    /// Cholesky when the matrix is positive definite, partial-pivot LU otherwise.
    pub fn new(matrix: DMatrix<f64>, context: &str) -> Result<Self> {
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            let diag = chol.l_dirty().diagonal();
            if rcond_from_diag(diag.iter().copied()) > f64::EPSILON {
                return Ok(SymmetricFactor::Cholesky(chol));
            }
        }
        let lu = LU::new(matrix);
        let rcond = rcond_from_diag(lu.u().diagonal().iter().copied());
        if !lu.is_invertible() || rcond <= f64::EPSILON {
            return Err(Error::Singular {
                detail: context.to_string(),
                condition: rcond,
            });
        }
        Ok(SymmetricFactor::Lu(lu))
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SymmetricFactor::Cholesky(c) => c.solve(rhs),
            // Invertibility was checked at construction.
            SymmetricFactor::Lu(lu) => lu.solve(rhs).expect("factor checked invertible"),
        }
    }
}

fn rcond_from_diag(diag: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for d in diag {
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    if hi == 0.0 || !lo.is_finite() {
        0.0
    } else {
        lo / hi
    }
}
