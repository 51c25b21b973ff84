//! The timestep-dependent energy norm `||u||_E^2 = u^T u + k u^T C u`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::operator::{sym_extreme_eigenvalues, Operator};

/// Relative size of a negative radicand that is clamped to zero rather than
/// reported as a non-PSD `C`.
const RADICAND_SLACK: f64 = 1e-14;

/// The pair `(C, k)` defining the energy norm and inner product.
///
/// The norm needs one product with `C`; `(I + kC)^{1/2}` is never formed.
#[derive(Debug, Clone)]
pub struct EnergyMetric {
    c: Arc<Operator>,
    k: f64,
    lambda_min_c: f64,
    lambda_max_c: f64,
}

impl EnergyMetric {
    /// Computes and caches the extreme eigenvalues of `C`.
    pub fn new(c: Operator, k: f64) -> Result<Self> {
        Self::shared(Arc::new(c), k)
    }

    pub fn shared(c: Arc<Operator>, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("timestep must be positive, got {k}")));
        }
        if !c.is_square() {
            return Err(Error::Dimension {
                what: "C must be square",
                expected: c.nrows(),
                got: c.ncols(),
            });
        }
        let (lo, hi) = if c.is_zero() {
            (0.0, 0.0)
        } else {
            sym_extreme_eigenvalues(&c.to_dense())
        };
        // Eigenvalues of a PSD matrix may come back at -1e-17 or so.
        let scale = hi.abs().max(1.0);
        if lo < -1e-10 * scale {
            return Err(Error::Structure(format!("C is not positive semidefinite (lambda_min = {lo:.3e})")));
        }
        Ok(Self::with_eigenvalues(c, k, lo.max(0.0), hi.max(0.0)))
    }

    /// Uses eigenvalue extremes the caller already knows.
    pub fn with_eigenvalues(c: Arc<Operator>, k: f64, lambda_min_c: f64, lambda_max_c: f64) -> Self {
        debug_assert!(0.0 <= lambda_min_c && lambda_min_c <= lambda_max_c);
        EnergyMetric {
            c,
            k,
            lambda_min_c,
            lambda_max_c,
        }
    }

    /// Same `C`, different timestep; cached eigenvalues are reused.
    pub fn with_timestep(&self, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("timestep must be positive, got {k}")));
        }
        Ok(EnergyMetric { k, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn c(&self) -> &Operator {
        &self.c
    }
    pub fn lambda_min_c(&self) -> f64 {
        self.lambda_min_c
    }
    pub fn lambda_max_c(&self) -> f64 {
        self.lambda_max_c
    }

    pub fn norm(&self, u: &DVector<f64>) -> Result<f64> {
        energy_norm(self, u)
    }

    /// `1 / (1 + k lambda_min(C))`, the norm of `(I + kC)^{-1}`.
    pub fn resolvent_factor(&self) -> f64 {
        1.0 / (1.0 + self.k * self.lambda_min_c)
    }
}

/// `sqrt(u^T u + k u^T C u)`.
pub fn energy_norm(metric: &EnergyMetric, u: &DVector<f64>) -> Result<f64> {
    check_dim("state", metric.dim(), u.len())?;
    let uu = u.dot(u);
    let radicand = uu + metric.k * u.dot(&metric.c.apply(u));
    if radicand < 0.0 {
        if radicand < -RADICAND_SLACK * uu {
            return Err(Error::Structure(format!("negative energy {radicand:.3e}: C is not positive semidefinite")));
        }
        return Ok(0.0);
    }
    Ok(radicand.sqrt())
}

/// `v^T (I + kC) u`.
pub fn energy_inner(metric: &EnergyMetric, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dim("left vector", metric.dim(), u.len())?;
    check_dim("right vector", metric.dim(), v.len())?;
    Ok(v.dot(u) + metric.k * v.dot(&metric.c.apply(u)))
}

/// `(lo, hi)` with `lo ||u||_2 <= ||u||_E <= hi ||u||_2`.
pub fn norm_equivalence_bounds(metric: &EnergyMetric) -> (f64, f64) {
    (
        (1.0 + metric.k * metric.lambda_min_c).sqrt(),
        (1.0 + metric.k * metric.lambda_max_c).sqrt(),
    )
}

/// Bound on an induced energy norm from the spectral norm:
/// `||M||_E <= ||M||_2 sqrt(1 + k lambda_max(C))`.
pub fn induced_energy_bound(spectral_norm: f64, metric: &EnergyMetric) -> f64 {
    spectral_norm * norm_equivalence_bounds(metric).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::psd_sqrt;
    use nalgebra::DMatrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn zero_c_is_two_norm() {
        let m = EnergyMetric::new(Operator::Zero(2), 0.7).unwrap();
        assert_eq!(energy_norm(&m, &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(energy_norm(&m, &v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(energy_inner(&m, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(norm_equivalence_bounds(&m), (1.0, 1.0));
    }

    #[test]
    fn identity_c() {
        let m = EnergyMetric::new(Operator::identity(2), 1.0).unwrap();
        assert_eq!(energy_norm(&m, &v(&[1.0, 1.0])).unwrap(), 2.0);
        let m = EnergyMetric::new(Operator::identity(2), 3.0).unwrap();
        assert_eq!(norm_equivalence_bounds(&m), (2.0, 2.0));
    }

    #[test]
    fn inner_product_against_square_root_form() {
        let c = DMatrix::from_diagonal(&v(&[1.0, 2.0]));
        let m = EnergyMetric::new(Operator::Dense(c.clone()), 0.5).unwrap();
        let (u, w) = (v(&[1.0, 1.0]), v(&[1.0, 1.0]));
        let got = energy_inner(&m, &u, &w).unwrap();
        let nk = psd_sqrt(&(DMatrix::identity(2, 2) + c * 0.5));
        let oracle = (&nk * &w).dot(&(&nk * &u));
        assert!((got - oracle).abs() < 1e-14);
        assert!((got - 3.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_bounds() {
        let m = EnergyMetric::new(Operator::diagonal(&[0.0, 4.0]), 2.0).unwrap();
        let oracle = DMatrix::from_diagonal(&v(&[0.0, 4.0])).symmetric_eigenvalues();
        assert_eq!(m.lambda_min_c(), oracle.min());
        assert_eq!(m.lambda_max_c(), oracle.max());
        assert_eq!(norm_equivalence_bounds(&m), (1.0, 3.0));
    }

    #[test]
    fn non_psd_c_rejected() {
        assert!(matches!(
            EnergyMetric::new(Operator::diagonal(&[1.0, -1.0]), 1.0),
            Err(Error::Structure(_))
        ));
        // an unchecked metric on an indefinite C is caught at evaluation
        let m = EnergyMetric::with_eigenvalues(Arc::new(Operator::diagonal(&[-3.0, 0.0])), 1.0, 0.0, 0.0);
        assert!(matches!(energy_norm(&m, &v(&[1.0, 0.0])), Err(Error::Structure(_))));
    }

    #[test]
    fn rejects_bad_timestep() {
        assert!(EnergyMetric::new(Operator::Zero(1), 0.0).is_err());
        assert!(EnergyMetric::new(Operator::Zero(1), -1.0).is_err());
    }

    #[test]
    fn dimension_checked() {
        let m = EnergyMetric::new(Operator::Zero(2), 1.0).unwrap();
        assert!(energy_norm(&m, &v(&[1.0])).is_err());
    }
}
