//! Random systems satisfying the structural hypotheses, for property tests
//! and the verification suites. All draws come from a seeded ChaCha stream.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::system::{Forcing, OdeSystem, SkewField};

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G G^T / cols` for a Gaussian `n x rank` factor; rank-deficient when
/// `rank < n`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> DMatrix<f64> {
    if rank == 0 {
        return DMatrix::zeros(n, n);
    }
    let g = gaussian_matrix(rng, n, rank);
    let m = &g * g.transpose() / rank as f64;
    // exact symmetry, not just up to rounding
    (&m + m.transpose()) * 0.5
}

/// `G - G^T`, exactly skew.
pub fn random_skew<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    &g - g.transpose()
}

/// Log-uniform draw from `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewKind {
    Zero,
    Constant,
    /// `B(u) = S0 + sin(w . u) S1`.
    StateDependent,
    /// Any of the above, chosen by the generator.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKind {
    Zero,
    Constant,
    /// `f(t) = g0 + sin(w1 t) g1 + cos(w2 t) g2`.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemSpec {
    pub min_dim: usize,
    pub max_dim: usize,
    pub skew: SkewKind,
    pub forcing: ForcingKind,
    /// Smallest eigenvalue floor added to `A - C`; 0 allows `A - C` to be
    /// singular as long as `A` stays definite.
    pub margin_floor: f64,
}

impl Default for RandomSystemSpec {
    fn default() -> Self {
        RandomSystemSpec {
            min_dim: 2,
            max_dim: 50,
            skew: SkewKind::Mixed,
            forcing: ForcingKind::Zero,
            margin_floor: 1e-3,
        }
    }
}

impl RandomSystemSpec {
    pub fn with_forcing(mut self, forcing: ForcingKind) -> Self {
        self.forcing = forcing;
        self
    }
    pub fn with_skew(mut self, skew: SkewKind) -> Self {
        self.skew = skew;
        self
    }
    pub fn with_dims(mut self, min_dim: usize, max_dim: usize) -> Self {
        self.min_dim = min_dim;
        self.max_dim = max_dim;
        self
    }
}

/// Draws `C` PSD (possibly rank-deficient or zero), `A = C + Q` with `Q`
/// SPD, a skew field and a forcing, with magnitudes spread over several
/// decades.
pub fn random_system(seed: u64, spec: &RandomSystemSpec) -> Result<OdeSystem> {
    if spec.min_dim == 0 || spec.min_dim > spec.max_dim {
        return Err(Error::InvalidParameter(format!(
            "bad dimension range {}..={}",
            spec.min_dim, spec.max_dim
        )));
    }
    let mut rng = rng_for(seed);
    let n = rng.random_range(spec.min_dim..=spec.max_dim);

    let c_rank = match rng.random_range(0..4) {
        0 => 0,
        1 => rng.random_range(1..=n),
        _ => n,
    };
    let c = random_psd(&mut rng, n, c_rank) * log_uniform(&mut rng, 1e-2, 1e2);
    let q_rank = rng.random_range(1..=n);
    let floor = if spec.margin_floor > 0.0 {
        log_uniform(&mut rng, spec.margin_floor, 1.0)
    } else {
        0.0
    };
    let mut q = random_psd(&mut rng, n, q_rank) * log_uniform(&mut rng, 1e-2, 1e2);
    for i in 0..n {
        q[(i, i)] += floor;
    }
    if floor == 0.0 && q_rank < n && c_rank < n {
        // keep A definite
        for i in 0..n {
            q[(i, i)] += 1e-6;
        }
    }
    let a = &c + &q;

    let skew_kind = match spec.skew {
        SkewKind::Mixed => [SkewKind::Zero, SkewKind::Constant, SkewKind::StateDependent][rng.random_range(0..3)],
        other => other,
    };
    let b_scale = log_uniform(&mut rng, 1e-1, 1e2);
    let b = match skew_kind {
        SkewKind::Zero => SkewField::Constant(Operator::Zero(n)),
        SkewKind::Constant => SkewField::Constant(Operator::Dense(random_skew(&mut rng, n) * b_scale)),
        SkewKind::StateDependent | SkewKind::Mixed => {
            let s0 = random_skew(&mut rng, n) * b_scale;
            let s1 = random_skew(&mut rng, n) * b_scale;
            let w = gaussian_vector(&mut rng, n);
            SkewField::state_dependent(move |u: &DVector<f64>| Operator::Dense(&s0 + &s1 * w.dot(u).sin()))
        }
    };

    let f = match spec.forcing {
        ForcingKind::Zero => Forcing::Zero,
        ForcingKind::Constant => Forcing::Constant(gaussian_vector(&mut rng, n)),
        ForcingKind::Smooth => {
            let g0 = gaussian_vector(&mut rng, n);
            let g1 = gaussian_vector(&mut rng, n);
            let g2 = gaussian_vector(&mut rng, n);
            let w1 = rng.random_range(0.1..10.0);
            let w2 = rng.random_range(0.1..10.0);
            Forcing::TimeDependent(Arc::new(move |t: f64| &g0 + &g1 * (w1 * t).sin() + &g2 * (w2 * t).cos()))
        }
    };

    let u0 = gaussian_vector(&mut rng, n);
    OdeSystem::new(Operator::Dense(a), Operator::Dense(c), b, f, u0)
}

/// A `(D1, D2, D3)` triple with `D1 = Q + D2`, `Q` PSD, `D2` SPD and `D3` skew.
pub fn random_contraction_triple(seed: u64, min_dim: usize, max_dim: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = rng_for(seed);
    let n = rng.random_range(min_dim..=max_dim);
    let mut d2 = random_psd(&mut rng, n, n) * log_uniform(&mut rng, 1e-2, 1e2);
    for i in 0..n {
        d2[(i, i)] += log_uniform(&mut rng, 1e-3, 1.0);
    }
    let rank = rng.random_range(0..=n);
    let q = random_psd(&mut rng, n, rank) * log_uniform(&mut rng, 1e-2, 1e2);
    let d1 = &q + &d2;
    let d3 = random_skew(&mut rng, n) * log_uniform(&mut rng, 1e-2, 1e2);
    (d1, d2, d3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{default_probe_states, validate_structure, DEFAULT_STRUCTURE_TOL};

    #[test]
    fn generated_systems_validate() {
        for seed in 0..40 {
            let sys = random_system(seed, &RandomSystemSpec::default().with_forcing(ForcingKind::Smooth)).unwrap();
            let probes = default_probe_states(&sys, seed);
            let r = validate_structure(&sys, DEFAULT_STRUCTURE_TOL, &probes).unwrap();
            assert!(r.valid, "seed {seed}: {:?}", r.failures());
        }
    }

    #[test]
    fn same_seed_same_system() {
        let spec = RandomSystemSpec::default();
        let a = random_system(11, &spec).unwrap();
        let b = random_system(11, &spec).unwrap();
        assert_eq!(a.a().to_dense(), b.a().to_dense());
        assert_eq!(a.initial_state(), b.initial_state());
    }

    #[test]
    fn skew_is_exact() {
        let mut rng = rng_for(3);
        let s = random_skew(&mut rng, 6);
        assert_eq!(&s + s.transpose(), DMatrix::zeros(6, 6));
        let p = random_psd(&mut rng, 6, 2);
        assert_eq!(p, p.transpose());
    }
}
