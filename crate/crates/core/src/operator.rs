//! Linear operators backing the coefficient matrices.
//!
//! A coefficient may be stored dense, as compressed sparse rows, or as a
//! scaled product of factors applied right to left. The product form lets a
//! matrix that is dense when formed (an averaging or projection sandwich)
//! be applied at the cost of its sparse factors.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub enum Operator {
    /// The `n x n` zero matrix.
    Zero(usize),
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
    /// `scale * factors[0] * factors[1] * ... * factors[last]`.
    Product { scale: f64, factors: Vec<Operator> },
}

impl Operator {
    pub fn identity(n: usize) -> Self {
        Operator::Sparse(CsrMatrix::identity(n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Operator::Dense(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut coo = CooMatrix::new(nrows, ncols);
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Dimension {
                    what: "triplet index",
                    expected: nrows.max(ncols),
                    got: i.max(j),
                });
            }
            coo.push(i, j, v);
        }
        Ok(Operator::Sparse(CsrMatrix::from(&coo)))
    }

    /// Builds a product operator; factor shapes must chain.
    pub fn product(scale: f64, factors: Vec<Operator>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("empty operator product".into()));
        }
        for pair in factors.windows(2) {
            check_dim("product factor chaining", pair[0].ncols(), pair[1].nrows())?;
        }
        Ok(Operator::Product { scale, factors })
    }

    pub fn nrows(&self) -> usize {
        match self {
            Operator::Zero(n) => *n,
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(m) => m.nrows(),
            Operator::Product { factors, .. } => factors[0].nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Operator::Zero(n) => *n,
            Operator::Dense(m) => m.ncols(),
            Operator::Sparse(m) => m.ncols(),
            Operator::Product { factors, .. } => factors[factors.len() - 1].ncols(),
        }
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Operator::Zero(_) => true,
            Operator::Dense(m) => m.iter().all(|&v| v == 0.0),
            Operator::Sparse(m) => m.values().iter().all(|&v| v == 0.0),
            Operator::Product { scale, factors } => *scale == 0.0 || factors.iter().any(Operator::is_zero),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols(), "operator applied to vector of wrong length");
        match self {
            Operator::Zero(n) => DVector::zeros(*n),
            Operator::Dense(m) => m * x,
            Operator::Sparse(m) => csr_mul_vec(m, x),
            Operator::Product { scale, factors } => {
                let mut y = x.clone();
                for f in factors.iter().rev() {
                    y = f.apply(&y);
                }
                y * *scale
            }
        }
    }

    /// `self * x` checked against dimension.
    pub fn try_apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("operator input", self.ncols(), x.len())?;
        Ok(self.apply(x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Zero(n) => DMatrix::zeros(*n, *n),
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(m) => {
                let mut d = DMatrix::zeros(m.nrows(), m.ncols());
                for (i, row) in m.row_iter().enumerate() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        d[(i, j)] += v;
                    }
                }
                d
            }
            Operator::Product { .. } => {
                let n = self.ncols();
                let mut d = DMatrix::zeros(self.nrows(), n);
                let mut e = DVector::zeros(n);
                for j in 0..n {
                    e[j] = 1.0;
                    d.set_column(j, &self.apply(&e));
                    e[j] = 0.0;
                }
                d
            }
        }
    }

    /// Sparse form when one exists without densifying.
    pub fn as_csr(&self) -> Option<CsrMatrix<f64>> {
        match self {
            Operator::Zero(n) => Some(CsrMatrix::zeros(*n, *n)),
            Operator::Sparse(m) => Some(m.clone()),
            _ => None,
        }
    }

    /// Largest number of stored entries in any row, for sparse storage.
    pub fn max_row_nnz(&self) -> Option<usize> {
        match self {
            Operator::Zero(_) => Some(0),
            Operator::Sparse(m) => Some(m.row_iter().map(|r| r.nnz()).max().unwrap_or(0)),
            _ => None,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        match self {
            Operator::Zero(n) => Operator::Zero(n),
            Operator::Dense(m) => Operator::Dense(m * s),
            Operator::Sparse(m) => Operator::Sparse(m * s),
            Operator::Product { scale, factors } => Operator::Product {
                scale: scale * s,
                factors,
            },
        }
    }

    /// `max |M_ij - M_ji|`, computed on the dense form.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.to_dense();
        max_abs(&(&d - d.transpose()))
    }
}

impl From<DMatrix<f64>> for Operator {
    fn from(m: DMatrix<f64>) -> Self {
        Operator::Dense(m)
    }
}

impl From<CsrMatrix<f64>> for Operator {
    fn from(m: CsrMatrix<f64>) -> Self {
        Operator::Sparse(m)
    }
}

pub(crate) fn csr_mul_vec(m: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(m.nrows());
    for (i, row) in m.row_iter().enumerate() {
        let mut acc = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[j];
        }
        y[i] = acc;
    }
    y
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric part `(M + M^T) / 2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetric_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Extreme eigenvalues `(min, max)` of the symmetric part.
pub fn sym_extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Spectral norm via singular values.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |a, &s| a.max(s))
}

/// Square root of a symmetric positive semidefinite matrix, negative
/// eigenvalues clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_part(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}
