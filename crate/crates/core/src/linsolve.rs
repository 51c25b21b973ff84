//! Solves with the step matrix `M = I + kA + kB(u_n)`.
//!
//! `x^T M x = |x|^2 + k x^T A x > 0`, so `M` is invertible for every `k > 0`
//! even though it is not symmetric. Dense matrices use row-pivoted LU; sparse
//! ones use a banded LU with partial pivoting (lexicographic grid orderings
//! have bandwidth `m`). A restarted GMRES preconditioned by the symmetric
//! part of `M` is available for large sparse systems.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, LU, Dyn};
use nalgebra_sparse::CsrMatrix;

use crate::error::{check_dim, Error, Result};
use crate::operator::{sym_extreme_eigenvalues, Operator};

/// Default relative residual tolerance `||Mx - b|| <= rtol ||b||`.
pub const DEFAULT_RTOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 3;

/// `M = I + k(A + B)` for some `A` and skew `B`.
#[derive(Debug, Clone)]
pub struct StepMatrix {
    m: Operator,
    k: f64,
    margin: OnceLock<f64>,
}

impl StepMatrix {
    /// Assembles `I + kA + kB`. Sparse inputs give a sparse matrix.
    pub fn assemble(a: &Operator, b: &Operator, k: f64) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("timestep must be nonnegative, got {k}")));
        }
        let n = a.nrows();
        check_dim("A cols", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("B cols", n, b.ncols())?;
        let m = match (a.as_csr(), b.as_csr()) {
            (Some(sa), Some(sb)) => {
                let id = CsrMatrix::<f64>::identity(n);
                Operator::Sparse(&(&id + &(sa * k)) + &(sb * k))
            }
            _ => Operator::Dense(DMatrix::identity(n, n) + (a.to_dense() + b.to_dense()) * k),
        };
        Ok(StepMatrix {
            m,
            k,
            margin: OnceLock::new(),
        })
    }

    /// Wraps an explicitly given matrix.
    pub fn from_operator(m: Operator, k: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                what: "step matrix must be square",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        Ok(StepMatrix {
            m,
            k,
            margin: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn matrix(&self) -> &Operator {
        &self.m
    }

    /// Smallest eigenvalue of `(M + M^T)/2`, computed on first use.
    pub fn symmetric_part_margin(&self) -> f64 {
        *self.margin.get_or_init(|| sym_extreme_eigenvalues(&self.m.to_dense()).0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverStrategy {
    /// Banded LU for sparse matrices with small bandwidth, dense LU otherwise.
    #[default]
    Auto,
    Dense,
    Banded,
    Gmres { restart: usize, max_iter: usize },
}


#[derive(Debug, Clone)]
enum Kernel {
    Dense(LU<f64, Dyn, Dyn>),
    Banded(BandLu),
    Gmres {
        precond: BandLu,
        restart: usize,
        max_iter: usize,
    },
}

/// A reusable factorization of a step matrix. Immutable once built, so one
/// factorization may serve many solves and many threads.
#[derive(Debug, Clone)]
pub struct Factorization {
    kernel: Kernel,
    matrix: Operator,
    rtol: f64,
}

impl Factorization {
    pub fn new(m: &StepMatrix, strategy: SolverStrategy) -> Result<Self> {
        Self::with_tolerance(m, strategy, DEFAULT_RTOL)
    }

    pub fn with_tolerance(m: &StepMatrix, strategy: SolverStrategy, rtol: f64) -> Result<Self> {
        let op = &m.m;
        let kernel = match strategy {
            SolverStrategy::Dense => Kernel::Dense(op.to_dense().lu()),
            SolverStrategy::Banded => Kernel::Banded(BandLu::from_operator(op)?),
            SolverStrategy::Gmres { restart, max_iter } => {
                let d = op.as_csr().ok_or_else(|| {
                    Error::InvalidParameter("the iterative path needs a sparse step matrix".into())
                })?;
                let sym = &(&d + &d.transpose()) * 0.5;
                Kernel::Gmres {
                    precond: BandLu::factor(&sym)?,
                    restart: restart.max(1),
                    max_iter: max_iter.max(1),
                }
            }
            SolverStrategy::Auto => match op.as_csr() {
                Some(csr) => {
                    let (kl, ku) = bandwidth(&csr);
                    if 4 * (kl + ku + 1) < csr.nrows() {
                        Kernel::Banded(BandLu::factor(&csr)?)
                    } else {
                        Kernel::Dense(op.to_dense().lu())
                    }
                }
                None => Kernel::Dense(op.to_dense().lu()),
            },
        };
        Ok(Factorization {
            kernel,
            matrix: op.clone(),
            rtol,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn raw_solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.kernel {
            Kernel::Dense(lu) => lu.solve(b),
            Kernel::Banded(band) => band.solve(b),
            Kernel::Gmres {
                precond,
                restart,
                max_iter,
            } => gmres(&self.matrix, precond, b, self.rtol * 0.1, *restart, *max_iter),
        }
    }

    /// Solves `Mx = b` to `||Mx - b|| <= rtol ||b||`, refining iteratively if
    /// the first solve falls short.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("right-hand side", self.dim(), b.len())?;
        let bnorm = b.norm();
        if bnorm == 0.0 {
            return Ok(DVector::zeros(b.len()));
        }
        let fail = |residual: f64| Error::SolverFailure {
            residual,
            tolerance: self.rtol,
        };
        let mut x = self.raw_solve(b).ok_or_else(|| fail(f64::INFINITY))?;
        let mut r = b - self.matrix.apply(&x);
        let mut rel = r.norm() / bnorm;
        for _ in 0..REFINEMENT_STEPS {
            if rel <= self.rtol || !rel.is_finite() {
                break;
            }
            let dx = self.raw_solve(&r).ok_or_else(|| fail(rel))?;
            x += dx;
            r = b - self.matrix.apply(&x);
            rel = r.norm() / bnorm;
        }
        if rel <= self.rtol {
            Ok(x)
        } else {
            Err(fail(rel))
        }
    }
}

/// One-off solve with the default strategy and tolerance.
pub fn solve_step_matrix(m: &StepMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    Factorization::new(m, SolverStrategy::Auto)?.solve(b)
}

/// Lower and upper bandwidth of a sparse matrix.
pub fn bandwidth(m: &CsrMatrix<f64>) -> (usize, usize) {
    let mut kl = 0;
    let mut ku = 0;
    for (i, row) in m.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v == 0.0 {
                continue;
            }
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    (kl, ku)
}

/// LU factorization with partial pivoting of a banded matrix.
///
/// Row `i` of `U` is stored for columns `i ..= i + ku + kl` (pivoting can
/// widen the upper band by `kl`); the multipliers of each elimination step
/// are kept with the step and applied interleaved with the row swaps.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    /// Upper band width of `U` after pivoting, `ku + kl`.
    ku_u: usize,
    /// Row-major, `n` rows of `width = kl + ku_u + 1`, column offset `col - i + kl`.
    band: Vec<f64>,
    pivots: Vec<usize>,
    /// `kl` multipliers per elimination step.
    mult: Vec<f64>,
}

impl BandLu {
    pub fn from_operator(op: &Operator) -> Result<Self> {
        match op.as_csr() {
            Some(csr) => Self::factor(&csr),
            None => Self::factor(&dense_to_csr(&op.to_dense())),
        }
    }

    pub fn factor(m: &CsrMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        check_dim("banded LU needs a square matrix", n, m.ncols())?;
        let (kl, ku) = bandwidth(m);
        let ku_u = ku + kl;
        let width = kl + ku_u + 1;
        let mut band = vec![0.0; n * width];
        for (i, row) in m.row_iter().enumerate() {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if v != 0.0 {
                    band[i * width + (j + kl - i)] += v;
                }
            }
        }
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        let mut pivots = vec![0; n];
        let mut mult = vec![0.0; n * kl.max(1)];
        let scale = band.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = band[idx(j, j)].abs();
            for i in j + 1..=last {
                let v = band[idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * f64::EPSILON * 1e-3 {
                return Err(Error::SolverFailure {
                    residual: f64::INFINITY,
                    tolerance: DEFAULT_RTOL,
                });
            }
            pivots[j] = p;
            let col_end = (j + ku_u).min(n - 1);
            if p != j {
                for col in j..=col_end {
                    band.swap(idx(j, col), idx(p, col));
                }
            }
            let piv = band[idx(j, j)];
            for i in j + 1..=last {
                let l = band[idx(i, j)] / piv;
                band[idx(i, j)] = 0.0;
                mult[j * kl.max(1) + (i - j - 1)] = l;
                if l != 0.0 {
                    for col in j + 1..=col_end {
                        let u = band[idx(j, col)];
                        band[idx(i, col)] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku_u,
            band,
            pivots,
            mult,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.n;
        if b.len() != n {
            return None;
        }
        let width = self.kl + self.ku_u + 1;
        let kl = self.kl;
        let stride = kl.max(1);
        let mut x = b.clone();
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap_rows(j, p);
            }
            let xj = x[j];
            if xj != 0.0 {
                for i in j + 1..=(j + kl).min(n - 1) {
                    x[i] -= self.mult[j * stride + (i - j - 1)] * xj;
                }
            }
        }
        for i in (0..n).rev() {
            let row = &self.band[i * width..(i + 1) * width];
            let mut acc = x[i];
            for col in i + 1..=(i + self.ku_u).min(n - 1) {
                acc -= row[col + kl - i] * x[col];
            }
            x[i] = acc / row[kl];
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

fn dense_to_csr(d: &DMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = nalgebra_sparse::CooMatrix::new(d.nrows(), d.ncols());
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            let v = d[(i, j)];
            if v != 0.0 {
                coo.push(i, j, v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Right-preconditioned restarted GMRES.
fn gmres(
    a: &Operator,
    precond: &BandLu,
    b: &DVector<f64>,
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> Option<DVector<f64>> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    let mut iters = 0;
    while iters < max_iter {
        let r = b - a.apply(&x);
        let beta = r.norm();
        if beta <= rtol * bnorm {
            return Some(x);
        }
        let mut basis: Vec<DVector<f64>> = vec![r / beta];
        let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = DVector::<f64>::zeros(restart + 1);
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            iters += 1;
            let z = precond.solve(&basis[j])?;
            let mut w = a.apply(&z);
            for (i, v) in basis.iter().enumerate() {
                h[(i, j)] = w.dot(v);
                w.axpy(-h[(i, j)], v, 1.0);
            }
            let wnorm = w.norm();
            h[(j + 1, j)] = wnorm;
            if wnorm > 0.0 {
                basis.push(w / wnorm);
            }
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let denom = h[(j, j)].hypot(h[(j + 1, j)]);
            cs[j] = h[(j, j)] / denom;
            sn[j] = h[(j + 1, j)] / denom;
            h[(j, j)] = denom;
            h[(j + 1, j)] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= rtol * bnorm || wnorm == 0.0 || iters >= max_iter {
                break;
            }
        }
        let mut y = DVector::<f64>::zeros(used);
        for i in (0..used).rev() {
            let mut acc = g[i];
            for l in i + 1..used {
                acc -= h[(i, l)] * y[l];
            }
            y[i] = acc / h[(i, i)];
        }
        let mut update = DVector::zeros(n);
        for (i, v) in basis.iter().take(used).enumerate() {
            update.axpy(y[i], v, 1.0);
        }
        x += precond.solve(&update)?;
    }
    let r = b - a.apply(&x);
    (r.norm() <= rtol * bnorm * 10.0).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot() -> Operator {
        Operator::Dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    #[test]
    fn identity_matrix_returns_rhs() {
        let m = StepMatrix::assemble(&Operator::identity(3), &Operator::Zero(3), 0.0).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 5.0]);
        assert_eq!(solve_step_matrix(&m, &b).unwrap(), b);
    }

    #[test]
    fn scalar_division() {
        let m = StepMatrix::assemble(&Operator::diagonal(&[3.0]), &Operator::Zero(1), 1.0).unwrap();
        let x = solve_step_matrix(&m, &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(x[0], 0.25);
    }

    #[test]
    fn two_by_two_with_skew_part() {
        let m = StepMatrix::assemble(&Operator::identity(2), &rot(), 1.0).unwrap();
        let b = DVector::from_vec(vec![1.0, 0.0]);
        // [[2,1],[-1,2]]^{-1} = [[2,-1],[1,2]] / 5
        let oracle = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 2.0]) / 5.0 * &b;
        let x = solve_step_matrix(&m, &b).unwrap();
        assert!((&x - &oracle).norm() < 1e-15);
        assert!((x[0] - 0.4).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
        assert!((m.symmetric_part_margin() - 2.0).abs() < 1e-14);
    }

    fn tridiag_skew(n: usize) -> (Operator, Operator) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..n {
            a.push((i, i, 2.0));
            if i + 1 < n {
                a.push((i, i + 1, -1.0));
                a.push((i + 1, i, -1.0));
                b.push((i, i + 1, 3.0));
                b.push((i + 1, i, -3.0));
            }
            if i + 5 < n {
                b.push((i, i + 5, 0.5));
                b.push((i + 5, i, -0.5));
            }
        }
        (
            Operator::from_triplets(n, n, &a).unwrap(),
            Operator::from_triplets(n, n, &b).unwrap(),
        )
    }

    #[test]
    fn strategies_agree() {
        let n = 60;
        let (a, b) = tridiag_skew(n);
        let m = StepMatrix::assemble(&a, &b, 7.0).unwrap();
        let rhs = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
        let dense = Factorization::new(&m, SolverStrategy::Dense).unwrap().solve(&rhs).unwrap();
        let band = Factorization::new(&m, SolverStrategy::Banded).unwrap().solve(&rhs).unwrap();
        let gm = Factorization::new(
            &m,
            SolverStrategy::Gmres {
                restart: 30,
                max_iter: 500,
            },
        )
        .unwrap()
        .solve(&rhs)
        .unwrap();
        assert!((&dense - &band).norm() <= 1e-10 * dense.norm());
        assert!((&dense - &gm).norm() <= 1e-8 * dense.norm());
    }

    #[test]
    fn banded_pivots_when_needed() {
        // zero leading diagonal forces a row swap
        let m = Operator::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, 2.0), (2, 1, 3.0), (2, 2, 1.0)])
            .unwrap();
        let sm = StepMatrix::from_operator(m.clone(), 1.0).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = Factorization::new(&sm, SolverStrategy::Banded).unwrap().solve(&b).unwrap();
        assert!((m.apply(&x) - &b).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_reports_failure() {
        let m = StepMatrix::from_operator(Operator::Dense(DMatrix::zeros(2, 2)), 1.0).unwrap();
        let err = solve_step_matrix(&m, &DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(err, Err(Error::SolverFailure { .. })));
    }
}
