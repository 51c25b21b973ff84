//! The implicit-explicit step and trajectory integration.
//!
//! The stable scheme treats `A` and `B(u_n)` implicitly and `C` explicitly:
//!
//! ```text
//! (I + kA + kB(u_n)) u_{n+1} = (I + kC) u_n + k f((n+1)k)
//! ```
//!
//! The comparison scheme also moves the skew term to the explicit side:
//!
//! ```text
//! (I + kA) u_{n+1} = u_n - k B(u_n) u_n + k C u_n + k f((n+1)k)
//! ```

use nalgebra::DVector;

use crate::energy::{energy_norm, EnergyMetric};
use crate::error::{check_dim, Error, Result};
use crate::linsolve::{Factorization, SolverStrategy, StepMatrix};
use crate::operator::Operator;
use crate::system::OdeSystem;

/// Any state component above this magnitude (or non-finite) is a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ImexStable,
    ExplicitAdvection,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImexStable => "imex",
            Scheme::ExplicitAdvection => "explicit-advection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    k: f64,
    steps: usize,
    variant: Scheme,
}

impl SchemeConfig {
    pub fn new(k: f64, steps: usize, variant: Scheme) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("timestep must be positive, got {k}")));
        }
        Ok(SchemeConfig { k, steps, variant })
    }

    pub fn imex(k: f64, steps: usize) -> Result<Self> {
        Self::new(k, steps, Scheme::ImexStable)
    }

    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn variant(&self) -> Scheme {
        self.variant
    }
    /// `T = k N`.
    pub fn horizon(&self) -> f64 {
        self.k * self.steps as f64
    }
}

/// States `u_0 ..= u_N` with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub states: Vec<DVector<f64>>,
    pub energy_norms: Vec<f64>,
    pub two_norms: Vec<f64>,
    /// `||f_{n+1}||_E` for each completed step.
    pub forcing_energy_norms: Vec<f64>,
    pub scheme: SchemeConfig,
    /// Step index `n + 1` whose state tripped the blow-up detector.
    pub blow_up: Option<usize>,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory always holds u0")
    }

    pub fn completed_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.scheme.k;
        (0..self.states.len()).map(move |n| n as f64 * k)
    }
}

pub fn is_blown_up(u: &DVector<f64>) -> bool {
    u.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_THRESHOLD)
}

/// Performs steps of one scheme with a fixed timestep.
///
/// For a constant `B` the implicit matrix is factorized once; a
/// state-dependent `B` is re-assembled and re-factorized every step.
#[derive(Debug)]
pub struct Stepper<'a> {
    system: &'a OdeSystem,
    k: f64,
    scheme: Scheme,
    strategy: SolverStrategy,
    cached: Option<Factorization>,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a OdeSystem, k: f64, scheme: Scheme) -> Result<Self> {
        Self::with_strategy(system, k, scheme, SolverStrategy::Auto)
    }

    pub fn with_strategy(system: &'a OdeSystem, k: f64, scheme: Scheme, strategy: SolverStrategy) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("timestep must be positive, got {k}")));
        }
        let n = system.dim();
        let cached = match scheme {
            Scheme::ExplicitAdvection => Some(Factorization::new(
                &StepMatrix::assemble(system.a(), &Operator::Zero(n), k)?,
                strategy,
            )?),
            Scheme::ImexStable if system.skew().is_constant() => {
                let b = system.b_at(system.initial_state())?;
                Some(Factorization::new(&StepMatrix::assemble(system.a(), &b, k)?, strategy)?)
            }
            Scheme::ImexStable => None,
        };
        Ok(Stepper {
            system,
            k,
            scheme,
            strategy,
            cached,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `u_{n+1}` from `u_n` and `f_{n+1}`.
    pub fn step(&self, u_n: &DVector<f64>, f_next: &DVector<f64>) -> Result<DVector<f64>> {
        let sys = self.system;
        check_dim("state", sys.dim(), u_n.len())?;
        check_dim("forcing", sys.dim(), f_next.len())?;
        let k = self.k;
        let mut rhs = u_n + sys.c().apply(u_n) * k + f_next * k;
        match self.scheme {
            Scheme::ImexStable => match &self.cached {
                Some(fact) => fact.solve(&rhs),
                None => {
                    let b = sys.b_at(u_n)?;
                    let m = StepMatrix::assemble(sys.a(), &b, k)?;
                    Factorization::new(&m, self.strategy)?.solve(&rhs)
                }
            },
            Scheme::ExplicitAdvection => {
                let b = sys.b_at(u_n)?;
                rhs -= b.apply(u_n) * k;
                self.cached
                    .as_ref()
                    .expect("explicit scheme always caches I + kA")
                    .solve(&rhs)
            }
        }
    }
}

/// One step of the implicit-explicit scheme.
pub fn imex_step(system: &OdeSystem, k: f64, u_n: &DVector<f64>, f_next: &DVector<f64>) -> Result<DVector<f64>> {
    let b = system.b_at(u_n)?;
    let m = StepMatrix::assemble(system.a(), &b, k)?;
    let rhs = u_n + system.c().try_apply(u_n)? * k + f_next * k;
    Factorization::new(&m, SolverStrategy::Auto)?.solve(&rhs)
}

/// One step of the comparison scheme with explicit advection.
pub fn explicit_advection_step(
    system: &OdeSystem,
    k: f64,
    u_n: &DVector<f64>,
    f_next: &DVector<f64>,
) -> Result<DVector<f64>> {
    Stepper::new(system, k, Scheme::ExplicitAdvection)?.step(u_n, f_next)
}

/// Runs `config.steps()` steps from the system's initial state, sampling the
/// forcing at `t = (n+1)k`.
///
/// A blow-up ends the run early; the record then holds the states computed so
/// far and the offending step index.
pub fn integrate(system: &OdeSystem, config: &SchemeConfig, monitor: &EnergyMetric) -> Result<TrajectoryRecord> {
    integrate_with(system, config, monitor, SolverStrategy::Auto)
}

pub fn integrate_with(
    system: &OdeSystem,
    config: &SchemeConfig,
    monitor: &EnergyMetric,
    strategy: SolverStrategy,
) -> Result<TrajectoryRecord> {
    check_dim("energy metric", system.dim(), monitor.dim())?;
    let stepper = Stepper::with_strategy(system, config.k, config.variant, strategy)?;
    let u0 = system.initial_state().clone();
    let mut rec = TrajectoryRecord {
        energy_norms: vec![energy_norm(monitor, &u0)?],
        two_norms: vec![u0.norm()],
        states: vec![u0],
        forcing_energy_norms: Vec::with_capacity(config.steps),
        scheme: *config,
        blow_up: None,
    };
    for n in 0..config.steps {
        let f_next = system.f_at((n + 1) as f64 * config.k)?;
        rec.forcing_energy_norms.push(energy_norm(monitor, &f_next)?);
        match step_checked(&stepper, rec.final_state(), &f_next)? {
            StepOutcome::Ok(u) => push_state(&mut rec, u, monitor)?,
            StepOutcome::BlownUp(u) => {
                rec.blow_up = Some(n + 1);
                if let Some(u) = u {
                    push_state(&mut rec, u, monitor)?;
                }
                break;
            }
        }
    }
    Ok(rec)
}

enum StepOutcome {
    Ok(DVector<f64>),
    /// The offending state, when it is still finite.
    BlownUp(Option<DVector<f64>>),
}

fn step_checked(stepper: &Stepper<'_>, u_n: &DVector<f64>, f_next: &DVector<f64>) -> Result<StepOutcome> {
    match stepper.step(u_n, f_next) {
        Ok(u) if is_blown_up(&u) => {
            let finite = u.iter().all(|v| v.is_finite());
            Ok(StepOutcome::BlownUp(finite.then_some(u)))
        }
        Ok(u) => Ok(StepOutcome::Ok(u)),
        // overflow inside the solve shows up as a non-finite residual
        Err(Error::SolverFailure { residual, .. }) if !residual.is_finite() => Ok(StepOutcome::BlownUp(None)),
        Err(e) => Err(e),
    }
}

fn push_state(rec: &mut TrajectoryRecord, u: DVector<f64>, monitor: &EnergyMetric) -> Result<()> {
    let e = match energy_norm(monitor, &u) {
        Ok(e) => e,
        Err(_) if rec.blow_up.is_some() => f64::INFINITY,
        Err(err) => return Err(err),
    };
    rec.energy_norms.push(e);
    rec.two_norms.push(u.norm());
    rec.states.push(u);
    Ok(())
}

/// Solves `(A + B - C) u* = f` for a constant `B` and time-independent `f`;
/// `u*` is then a fixed point of every implicit-explicit step.
pub fn fixed_point(system: &OdeSystem) -> Result<DVector<f64>> {
    if !system.skew().is_constant() {
        return Err(Error::InvalidParameter("fixed point needs a constant B".into()));
    }
    if !system.forcing().is_time_independent() {
        return Err(Error::InvalidParameter("fixed point needs a time-independent forcing".into()));
    }
    let b = system.b_at(system.initial_state())?;
    let m = system.a().to_dense() + b.to_dense() - system.c().to_dense();
    let f = system.f_at(0.0)?;
    let x = m.clone().lu().solve(&f).ok_or(Error::SolverFailure {
        residual: f64::INFINITY,
        tolerance: crate::linsolve::DEFAULT_RTOL,
    })?;
    let res = (&m * &x - &f).norm();
    let scale = f.norm().max(f64::MIN_POSITIVE);
    if res > 1e-8 * scale {
        return Err(Error::SolverFailure {
            residual: res / scale,
            tolerance: 1e-8,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Forcing, SkewField};
    use nalgebra::DMatrix;

    fn rot() -> Operator {
        Operator::Dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar(a: f64, f: Forcing, u0: f64) -> OdeSystem {
        OdeSystem::new(
            Operator::diagonal(&[a]),
            Operator::Zero(1),
            SkewField::Constant(Operator::Zero(1)),
            f,
            v(&[u0]),
        )
        .unwrap()
    }

    #[test]
    fn near_identity_solve_is_forward_euler_like() {
        let sys = OdeSystem::new(
            Operator::diagonal(&[1e-12, 1e-12]),
            Operator::Zero(2),
            SkewField::Constant(Operator::Zero(2)),
            Forcing::Zero,
            v(&[1.0, -1.0]),
        )
        .unwrap();
        let (u, f, k) = (v(&[1.0, -1.0]), v(&[2.0, 3.0]), 0.5);
        let got = imex_step(&sys, k, &u, &f).unwrap();
        assert!((got - (&u + &f * k)).norm() < 1e-9);
    }

    #[test]
    fn scalar_decay_step() {
        let sys = scalar(1.0, Forcing::Zero, 1.0);
        assert_eq!(imex_step(&sys, 1.0, &v(&[1.0]), &v(&[0.0])).unwrap()[0], 0.5);
        assert_eq!(explicit_advection_step(&sys, 1.0, &v(&[1.0]), &v(&[0.0])).unwrap()[0], 0.5);
    }

    #[test]
    fn rotation_with_explicit_c() {
        let sys = OdeSystem::new(
            Operator::identity(2),
            Operator::identity(2),
            SkewField::Constant(rot()),
            Forcing::Zero,
            v(&[1.0, 0.0]),
        )
        .unwrap();
        let got = imex_step(&sys, 1.0, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        // [[2,1],[-1,2]]^{-1} (2,0)
        let oracle = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 2.0]) / 5.0 * v(&[2.0, 0.0]);
        assert!((&got - &oracle).norm() < 1e-15);
        assert!((&got - v(&[0.8, 0.4])).norm() < 1e-15);
    }

    #[test]
    fn explicit_rotation() {
        let sys = OdeSystem::new(
            Operator::identity(2),
            Operator::Zero(2),
            SkewField::Constant(rot()),
            Forcing::Zero,
            v(&[1.0, 0.0]),
        )
        .unwrap();
        let u1 = explicit_advection_step(&sys, 1.0, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        // rhs = u0 - B u0 = (1, 1); (I + A) = 2I
        assert!((&u1 - v(&[0.5, 0.5])).norm() < 1e-15);
        let imex = imex_step(&sys, 1.0, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert!(imex.norm() <= u1.norm());
    }

    #[test]
    fn schemes_coincide_without_skew_term() {
        let sys = OdeSystem::new(
            Operator::diagonal(&[2.0, 0.5]),
            Operator::diagonal(&[1.0, 0.25]),
            SkewField::Constant(Operator::Zero(2)),
            Forcing::Zero,
            v(&[1.0, 2.0]),
        )
        .unwrap();
        let (u, f) = (v(&[0.3, -1.2]), v(&[1.0, 0.5]));
        let a = imex_step(&sys, 0.7, &u, &f).unwrap();
        let b = explicit_advection_step(&sys, 0.7, &u, &f).unwrap();
        assert!((&a - &b).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn zero_steps_keeps_initial_state() {
        let sys = scalar(1.0, Forcing::Zero, 2.0);
        let m = EnergyMetric::new(Operator::Zero(1), 0.1).unwrap();
        let rec = integrate(&sys, &SchemeConfig::imex(0.1, 0).unwrap(), &m).unwrap();
        assert_eq!(rec.states.len(), 1);
        assert_eq!(rec.energy_norms, vec![2.0]);
        assert!(rec.forcing_energy_norms.is_empty());
    }

    #[test]
    fn scalar_forced_recursion() {
        let sys = scalar(1.0, Forcing::Constant(v(&[1.0])), 0.0);
        let m = EnergyMetric::new(Operator::Zero(1), 0.1).unwrap();
        let rec = integrate(&sys, &SchemeConfig::imex(0.1, 10).unwrap(), &m).unwrap();
        // independent evaluation of u_{n+1} = (u_n + 0.1) / 1.1
        let mut u = 0.0;
        for _ in 0..10 {
            u = (u + 0.1) / 1.1;
        }
        assert!((rec.final_state()[0] - u).abs() < 1e-15);
        assert!((rec.final_state()[0] - 0.614_456_710_570_467_9).abs() < 1e-12);
        assert_eq!(rec.states.len(), 11);
        assert_eq!(rec.forcing_energy_norms.len(), 10);
    }

    #[test]
    fn forcing_sampled_at_end_of_step() {
        let sys = scalar(1.0, Forcing::time_dependent(|t| DVector::from_element(1, t)), 0.0);
        let m = EnergyMetric::new(Operator::Zero(1), 0.5).unwrap();
        let rec = integrate(&sys, &SchemeConfig::imex(0.5, 2).unwrap(), &m).unwrap();
        assert_eq!(rec.forcing_energy_norms, vec![0.5, 1.0]);
        let u1 = 0.5 * 0.5 / 1.5;
        assert!((rec.states[1][0] - u1).abs() < 1e-15);
    }

    #[test]
    fn explicit_scheme_blows_up() {
        // pure rotation at a huge step: |1 - i k| / (1 + k eps) grows each step
        let sys = OdeSystem::new(
            Operator::diagonal(&[1e-3, 1e-3]),
            Operator::Zero(2),
            SkewField::Constant(rot().scaled(100.0)),
            Forcing::Zero,
            v(&[1.0, 0.0]),
        )
        .unwrap();
        let m = EnergyMetric::new(Operator::Zero(2), 1.0).unwrap();
        let cfg = SchemeConfig::new(1.0, 1000, Scheme::ExplicitAdvection).unwrap();
        let rec = integrate(&sys, &cfg, &m).unwrap();
        let step = rec.blow_up.expect("blow-up detected");
        assert!(step < 1000);
        assert_eq!(rec.completed_steps(), step);

        let imex = integrate(&sys, &SchemeConfig::imex(1.0, 1000).unwrap(), &m).unwrap();
        assert!(imex.blow_up.is_none());
        assert!(imex.energy_norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fixed_point_is_preserved() {
        let sys = OdeSystem::new(
            Operator::diagonal(&[2.0, 3.0]),
            Operator::diagonal(&[1.0, 1.0]),
            SkewField::Constant(rot()),
            Forcing::Constant(v(&[1.0, -2.0])),
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let star = fixed_point(&sys).unwrap();
        let next = imex_step(&sys, 3.0, &star, &v(&[1.0, -2.0])).unwrap();
        assert!((&next - &star).norm() < 1e-12);
    }
}
