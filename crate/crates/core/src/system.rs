//! Structured ODE systems `u' + A u + B(u) u - C u = f(t)`.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::operator::{max_abs, spectral_norm, sym_extreme_eigenvalues, Operator};

/// Default relative tolerance for [`validate_structure`].
pub const DEFAULT_STRUCTURE_TOL: f64 = 1e-10;

/// Number of random probe states added to `u0` by [`default_probe_states`].
pub const DEFAULT_RANDOM_PROBES: usize = 8;

type StateMap = dyn Fn(&DVector<f64>) -> Operator + Send + Sync;
type TimeMap = dyn Fn(f64) -> DVector<f64> + Send + Sync;

/// The skew-symmetric coefficient `B(u)`.
#[derive(Clone)]
pub enum SkewField {
    Constant(Operator),
    StateDependent(Arc<StateMap>),
}

impl SkewField {
    pub fn state_dependent<F>(f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Operator + Send + Sync + 'static,
    {
        SkewField::StateDependent(Arc::new(f))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SkewField::Constant(_))
    }

    pub fn at(&self, u: &DVector<f64>) -> Cow<'_, Operator> {
        match self {
            SkewField::Constant(b) => Cow::Borrowed(b),
            SkewField::StateDependent(f) => Cow::Owned(f(u)),
        }
    }
}

impl fmt::Debug for SkewField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkewField::Constant(b) => f.debug_tuple("Constant").field(b).finish(),
            SkewField::StateDependent(_) => f.write_str("StateDependent(..)"),
        }
    }
}

/// The forcing `f(t)`.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    Constant(DVector<f64>),
    TimeDependent(Arc<TimeMap>),
}

impl Forcing {
    pub fn time_dependent<F>(f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Forcing::TimeDependent(Arc::new(f))
    }

    pub fn at(&self, t: f64, n: usize) -> DVector<f64> {
        match self {
            Forcing::Zero => DVector::zeros(n),
            Forcing::Constant(v) => v.clone(),
            Forcing::TimeDependent(f) => f(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Constant(v) => v.iter().all(|&x| x == 0.0),
            Forcing::TimeDependent(_) => false,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        !matches!(self, Forcing::TimeDependent(_))
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => f.write_str("Zero"),
            Forcing::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Forcing::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

/// An ODE system `u' + A u + B(u) u - C u = f(t)` with initial state `u0`.
///
/// Construction checks dimensions only; the definiteness and symmetry
/// conditions are checked by [`validate_structure`].
#[derive(Debug, Clone)]
pub struct OdeSystem {
    n: usize,
    a: Operator,
    c: Operator,
    b: SkewField,
    f: Forcing,
    u0: DVector<f64>,
}

impl OdeSystem {
    pub fn new(a: Operator, c: Operator, b: SkewField, f: Forcing, u0: DVector<f64>) -> Result<Self> {
        let n = u0.len();
        if n == 0 {
            return Err(Error::InvalidParameter("state dimension must be positive".into()));
        }
        check_dim("A rows", n, a.nrows())?;
        check_dim("A cols", n, a.ncols())?;
        check_dim("C rows", n, c.nrows())?;
        check_dim("C cols", n, c.ncols())?;
        if let SkewField::Constant(bm) = &b {
            check_dim("B rows", n, bm.nrows())?;
            check_dim("B cols", n, bm.ncols())?;
        }
        if let Forcing::Constant(v) = &f {
            check_dim("forcing", n, v.len())?;
        }
        Ok(OdeSystem { n, a, c, b, f, u0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn a(&self) -> &Operator {
        &self.a
    }
    pub fn c(&self) -> &Operator {
        &self.c
    }
    pub fn skew(&self) -> &SkewField {
        &self.b
    }
    pub fn forcing(&self) -> &Forcing {
        &self.f
    }
    pub fn initial_state(&self) -> &DVector<f64> {
        &self.u0
    }

    /// `B(u)`, checked against the system dimension.
    pub fn b_at(&self, u: &DVector<f64>) -> Result<Cow<'_, Operator>> {
        check_dim("state", self.n, u.len())?;
        let b = self.b.at(u);
        check_dim("B(u) rows", self.n, b.nrows())?;
        check_dim("B(u) cols", self.n, b.ncols())?;
        Ok(b)
    }

    pub fn f_at(&self, t: f64) -> Result<DVector<f64>> {
        let v = self.f.at(t, self.n);
        check_dim("forcing", self.n, v.len())?;
        Ok(v)
    }

    pub fn with_initial_state(mut self, u0: DVector<f64>) -> Result<Self> {
        check_dim("initial state", self.n, u0.len())?;
        self.u0 = u0;
        Ok(self)
    }

    pub fn with_forcing(mut self, f: Forcing) -> Result<Self> {
        if let Forcing::Constant(v) = &f {
            check_dim("forcing", self.n, v.len())?;
        }
        self.f = f;
        Ok(self)
    }
}

/// Right-hand side `f(t) - A u - B(u) u + C u` of the system written as `u' = ...`.
pub fn rhs_eval(system: &OdeSystem, t: f64, u: &DVector<f64>) -> Result<DVector<f64>> {
    let b = system.b_at(u)?;
    let mut r = system.f_at(t)?;
    r -= system.a.apply(u);
    r -= b.apply(u);
    r += system.c.apply(u);
    Ok(r)
}

/// Outcome of checking the coefficient conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub a_symmetric: bool,
    /// Smallest eigenvalue of `(A + A^T)/2`.
    pub a_pd_margin: f64,
    pub c_symmetric: bool,
    pub c_psd_margin: f64,
    pub a_minus_c_psd_margin: f64,
    /// Max over probe states of `||B(u) + B(u)^T||_2`.
    pub b_skew_residual: f64,
    /// Absolute tolerance for the symmetry residuals and margins.
    pub tolerance: f64,
    /// Absolute tolerance for the skew residual of `B`.
    pub skew_tolerance: f64,
    pub valid: bool,
}

impl StructureReport {
    /// Names of the conditions that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let tol = self.tolerance;
        let mut out = Vec::new();
        if !self.a_symmetric {
            out.push("A symmetric");
        }
        if self.a_pd_margin <= 0.0 {
            out.push("A positive definite");
        }
        if !self.c_symmetric {
            out.push("C symmetric");
        }
        if self.c_psd_margin < -tol {
            out.push("C positive semidefinite");
        }
        if self.a_minus_c_psd_margin < -tol {
            out.push("A - C positive semidefinite");
        }
        if self.b_skew_residual > self.skew_tolerance {
            out.push("B(u) skew-symmetric");
        }
        out
    }
}

/// `u0` followed by [`DEFAULT_RANDOM_PROBES`] random unit vectors.
pub fn default_probe_states(system: &OdeSystem, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.dim();
    let mut probes = vec![system.u0.clone()];
    for _ in 0..DEFAULT_RANDOM_PROBES {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = v.norm();
        probes.push(if norm > 0.0 { v / norm } else { v });
    }
    probes
}

/// Checks `A = A^T > 0`, `C = C^T >= 0`, `A - C >= 0` and skew-symmetry of
/// `B` at each probe state.
///
/// `tol` is relative: the absolute threshold is `tol * ||A||_2`. Margins are
/// extreme eigenvalues of the symmetrized matrices, so they are reported even
/// when a symmetry check fails.
pub fn validate_structure(system: &OdeSystem, tol: f64, probe_states: &[DVector<f64>]) -> Result<StructureReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if probe_states.is_empty() {
        return Err(Error::InvalidParameter("at least one probe state is required".into()));
    }
    let a = system.a.to_dense();
    let c = system.c.to_dense();

    let (a_min, a_max) = sym_extreme_eigenvalues(&a);
    let a_norm = a_min.abs().max(a_max.abs());
    let abs_tol = tol * a_norm;

    let a_asym = max_abs(&(&a - a.transpose()));
    let c_asym = max_abs(&(&c - c.transpose()));
    let (c_min, _) = sym_extreme_eigenvalues(&c);
    let (amc_min, _) = sym_extreme_eigenvalues(&(&a - &c));

    let mut b_residual = 0.0_f64;
    let mut b_scale = 0.0_f64;
    let mut constant_checked = false;
    for u in probe_states {
        if system.b.is_constant() && constant_checked {
            break;
        }
        let b = system.b_at(u)?;
        if b.is_zero() {
            constant_checked = true;
            continue;
        }
        let bd = b.to_dense();
        let sym = &bd + bd.transpose();
        if max_abs(&sym) > 0.0 {
            b_residual = b_residual.max(spectral_norm(&sym));
        }
        b_scale = b_scale.max(bd.norm());
        constant_checked = true;
    }
    let skew_tol = tol * a_norm.max(b_scale);

    let a_symmetric = a_asym <= abs_tol;
    let c_symmetric = c_asym <= abs_tol;
    let valid = a_symmetric
        && c_symmetric
        && a_min > 0.0
        && c_min >= -abs_tol
        && amc_min >= -abs_tol
        && b_residual <= skew_tol;

    Ok(StructureReport {
        a_symmetric,
        a_pd_margin: a_min,
        c_symmetric,
        c_psd_margin: c_min,
        a_minus_c_psd_margin: amc_min,
        b_skew_residual: b_residual,
        tolerance: abs_tol,
        skew_tolerance: skew_tol,
        valid,
    })
}
