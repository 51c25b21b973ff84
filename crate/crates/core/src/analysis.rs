//! Numerical checks of the stability and convergence theory: the
//! contraction lemma, energy decay, the inhomogeneous growth bound, the
//! local truncation error and the global error bound.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::csv::{fmt_num, CsvTable};
use crate::energy::{energy_norm, EnergyMetric};
use crate::error::{check_dim, Error, Result};
use crate::operator::{max_abs, psd_sqrt, spectral_norm, sym_extreme_eigenvalues};
use crate::random::{random_contraction_triple, random_system, ForcingKind, RandomSystemSpec};
use crate::stepper::{integrate, Scheme, SchemeConfig, TrajectoryRecord};
use crate::system::rhs_eval;
use crate::system::OdeSystem;

/// Allowed excess over 1 in the contraction checks.
pub const CONTRACTION_SLACK: f64 = 1e-10;
/// Relative tolerance on the structural preconditions of [`check_contraction`].
const PRECONDITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ContractionWitness {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub d3: DMatrix<f64>,
    /// `D2^{1/2}`.
    pub d4: DMatrix<f64>,
    /// `D4 (D1 + D3)^{-1} D4`.
    pub f: DMatrix<f64>,
    pub spectral_norm_f: f64,
    pub contractive: bool,
}

/// Forms `F = D4 (D1 + D3)^{-1} D4` with `D4 = D2^{1/2}` and reports `||F||_2`.
///
/// Requires `D1, D2` symmetric positive definite, `D1 - D2` positive
/// semidefinite and `D3` skew; the first violated condition is named in the
/// error.
pub fn check_contraction(d1: &DMatrix<f64>, d2: &DMatrix<f64>, d3: &DMatrix<f64>) -> Result<ContractionWitness> {
    let n = d1.nrows();
    for (what, m) in [("D1", d1), ("D2", d2), ("D3", d3)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                got: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    let scale = max_abs(d1).max(max_abs(d2)).max(max_abs(d3)).max(f64::MIN_POSITIVE);
    let tol = PRECONDITION_TOL * scale;
    if max_abs(&(d1 - d1.transpose())) > tol {
        return Err(Error::Structure("D1 is not symmetric".into()));
    }
    if max_abs(&(d2 - d2.transpose())) > tol {
        return Err(Error::Structure("D2 is not symmetric".into()));
    }
    if max_abs(&(d3 + d3.transpose())) > tol {
        return Err(Error::Structure("D3 is not skew-symmetric".into()));
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    if sym_extreme_eigenvalues(&sym(d1)).0 <= 0.0 {
        return Err(Error::Structure("D1 is not positive definite".into()));
    }
    if sym_extreme_eigenvalues(&sym(d2)).0 <= 0.0 {
        return Err(Error::Structure("D2 is not positive definite".into()));
    }
    if sym_extreme_eigenvalues(&sym(&(d1 - d2))).0 < -tol {
        return Err(Error::Structure("D1 - D2 is not positive semidefinite".into()));
    }

    let d4 = psd_sqrt(d2);
    let lu = (d1 + d3).lu();
    let x = lu
        .solve(&d4)
        .ok_or_else(|| Error::Structure("D1 + D3 is singular".into()))?;
    let f = &d4 * x;
    let spectral_norm_f = spectral_norm(&f);
    Ok(ContractionWitness {
        d1: d1.clone(),
        d2: d2.clone(),
        d3: d3.clone(),
        d4,
        f,
        spectral_norm_f,
        contractive: spectral_norm_f <= 1.0 + CONTRACTION_SLACK,
    })
}

/// `||N_k (I + kA + kB(state))^{-1} N_k||_2` with `N_k = (I + kC)^{1/2}`:
/// the step map measured in the energy norm.
pub fn check_step_contraction(system: &OdeSystem, k: f64, state: &DVector<f64>) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("timestep must be positive, got {k}")));
    }
    let n = system.dim();
    let b = system.b_at(state)?;
    let id = DMatrix::<f64>::identity(n, n);
    let m = &id + system.a().to_dense() * k + b.to_dense() * k;
    let nk = psd_sqrt(&(&id + system.c().to_dense() * k));
    let x = m
        .lu()
        .solve(&nk)
        .ok_or_else(|| Error::Structure("step matrix is singular".into()))?;
    Ok(spectral_norm(&(&nk * x)))
}

/// `tau = (u(t+k) - u(t))/k + A u(t+k) + B(u(t)) u(t+k) - C u(t) - f(t+k)`:
/// the residual left by the exact solution in one step.
pub fn truncation_error(
    system: &OdeSystem,
    exact: &dyn Fn(f64) -> DVector<f64>,
    t_n: f64,
    k: f64,
) -> Result<DVector<f64>> {
    let u0 = exact(t_n);
    let u1 = exact(t_n + k);
    check_dim("exact solution", system.dim(), u0.len())?;
    check_dim("exact solution", system.dim(), u1.len())?;
    let b = system.b_at(&u0)?;
    Ok((&u1 - &u0) / k + system.a().apply(&u1) + b.apply(&u1) - system.c().apply(&u0) - system.f_at(t_n + k)?)
}

/// `(k, ||tau||_2)` for each timestep.
pub fn truncation_order_probe(
    system: &OdeSystem,
    exact: &dyn Fn(f64) -> DVector<f64>,
    t_n: f64,
    k_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    k_list
        .iter()
        .map(|&k| Ok((k, truncation_error(system, exact, t_n, k)?.norm())))
        .collect()
}

/// Least-squares slope of `log e` against `log k`; pairs with a zero error
/// are skipped. `None` with fewer than two usable pairs.
pub fn fitted_order(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, e)| *k > 0.0 && *e > 0.0)
        .map(|(k, e)| (k.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn rk4(system: &OdeSystem, t_final: f64, steps: usize) -> Result<DVector<f64>> {
    let h = t_final / steps as f64;
    let mut u = system.initial_state().clone();
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs_eval(system, t, &u)?;
        let k2 = rhs_eval(system, t + h / 2.0, &(&u + &k1 * (h / 2.0)))?;
        let k3 = rhs_eval(system, t + h / 2.0, &(&u + &k2 * (h / 2.0)))?;
        let k4 = rhs_eval(system, t + h, &(&u + &k3 * h))?;
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(u)
}

/// Relative change allowed between `substeps` and `2 substeps`.
pub const ORACLE_RTOL: f64 = 1e-10;

/// `u(T)` by classical fourth-order Runge-Kutta with `2 substeps` steps,
/// accepted only if `substeps` steps agree to [`ORACLE_RTOL`].
pub fn reference_solution(system: &OdeSystem, t_final: f64, substeps: usize) -> Result<DVector<f64>> {
    if substeps == 0 || !(t_final >= 0.0) {
        return Err(Error::InvalidParameter("reference solution needs T >= 0 and substeps > 0".into()));
    }
    let coarse = rk4(system, t_final, substeps)?;
    let fine = rk4(system, t_final, 2 * substeps)?;
    let diff = (&fine - &coarse).norm();
    let size = fine.norm();
    if !(diff <= ORACLE_RTOL * size) && diff != 0.0 {
        return Err(Error::Oracle {
            relative_change: if size > 0.0 { diff / size } else { f64::INFINITY },
        });
    }
    Ok(fine)
}

/// Where the "exact" solution at the final time comes from.
pub enum Reference<'a> {
    Oracle { substeps: usize },
    Exact(&'a dyn Fn(f64) -> DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub k: f64,
    pub steps: usize,
    pub error_e: f64,
    pub error_2: f64,
    /// `log(e_prev / e) / log(k_prev / k)`; absent for the first timestep.
    pub observed_order: Option<f64>,
}

fn steps_for(t_final: f64, k: f64) -> Result<usize> {
    let s = t_final / k;
    let n = s.round();
    if !(k > 0.0) || (s - n).abs() > 1e-9 * s.max(1.0) {
        return Err(Error::InvalidParameter(format!("T = {t_final} is not a multiple of k = {k}")));
    }
    Ok(n as usize)
}

/// Global error `||u_N - u(T)||_E` of the implicit-explicit scheme for each
/// timestep, with observed orders between consecutive timesteps.
pub fn convergence_study(
    system: &OdeSystem,
    t_final: f64,
    k_list: &[f64],
    reference: Reference<'_>,
) -> Result<Vec<ConvergencePoint>> {
    let target = match reference {
        Reference::Oracle { substeps } => reference_solution(system, t_final, substeps)?,
        Reference::Exact(u) => u(t_final),
    };
    check_dim("reference solution", system.dim(), target.len())?;
    let mut base: Option<EnergyMetric> = None;
    let mut out: Vec<ConvergencePoint> = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let steps = steps_for(t_final, k)?;
        let metric = match &base {
            Some(m) => m.with_timestep(k)?,
            None => EnergyMetric::new(system.c().clone(), k)?,
        };
        base.get_or_insert_with(|| metric.clone());
        let rec = integrate(system, &SchemeConfig::imex(k, steps)?, &metric)?;
        if let Some(step) = rec.blow_up {
            return Err(Error::Structure(format!("implicit-explicit run blew up at step {step}")));
        }
        let e = rec.final_state() - &target;
        let error_e = energy_norm(&metric, &e)?;
        let observed_order = out.last().and_then(|p: &ConvergencePoint| {
            (p.error_e > 0.0 && error_e > 0.0).then(|| (p.error_e / error_e).ln() / (p.k / k).ln())
        });
        out.push(ConvergencePoint {
            k,
            steps,
            error_e,
            error_2: e.norm(),
            observed_order,
        });
    }
    Ok(out)
}

/// Measured constants of the global error bound and the bound itself.
#[derive(Debug, Clone)]
pub struct ConvergenceBound {
    /// Energy-norm bound on the linearized skew-field difference; 0 for a
    /// constant `B`.
    pub gamma_e: f64,
    /// `max_t (||u''||_E + ||C u'||_E + ||dB(u(t))/dt||_E max_s ||u(s)||_E)`,
    /// sampled.
    pub u_const: f64,
    pub lambda_min_c: f64,
    pub k: f64,
    pub t_final: f64,
    /// Bound on `||e_N||_E` from unrolling the error recursion.
    pub predicted_error: f64,
    /// `max_t ||f(t)||_2`, sampled.
    pub f_t: f64,
    /// `||e_n||_E` along the run, `n = 0..=N`.
    pub measured_errors: Vec<f64>,
    /// Recursion bound for each `n`.
    pub bound_series: Vec<f64>,
}

impl ConvergenceBound {
    pub fn holds(&self) -> bool {
        self.measured_errors
            .iter()
            .zip(&self.bound_series)
            .all(|(e, b)| *e <= b * (1.0 + 1e-12) + 1e-15)
    }

    /// `T k U / (1 + k lambda_min(C))`, the closed form when `gamma_e = 0`.
    pub fn gamma_zero_closed_form(&self) -> f64 {
        self.t_final * self.k * self.u_const / (1.0 + self.k * self.lambda_min_c)
    }
}

/// Measures `U` and `Gamma_E` from an exact solution (which must also be
/// defined slightly outside `[0, T]` for the difference quotients), runs the
/// scheme, and compares its error with the unrolled recursion
/// `r_{n+1} = a r_n + k/(1 + k lambda_min) k U`, `a = 1 + k Gamma_E/(1 + k lambda_min)`.
pub fn convergence_bound(
    system: &OdeSystem,
    exact: &dyn Fn(f64) -> DVector<f64>,
    t_final: f64,
    k: f64,
    samples: usize,
) -> Result<ConvergenceBound> {
    let steps = steps_for(t_final, k)?;
    let metric = EnergyMetric::new(system.c().clone(), k)?;
    let (lmin, lmax) = (metric.lambda_min_c(), metric.lambda_max_c());
    let samples = samples.max(1);
    let times: Vec<f64> = (0..=samples).map(|i| t_final * i as f64 / samples as f64).collect();
    let delta = 1e-4 * t_final.max(1.0);
    let constant_b = system.skew().is_constant();
    // induced energy norm bounded through the 2-norm
    let e_factor = ((1.0 + k * lmax) / (1.0 + k * lmin)).sqrt();

    let mut u_max_e: f64 = 0.0;
    let mut f_t: f64 = 0.0;
    for &t in &times {
        u_max_e = u_max_e.max(energy_norm(&metric, &exact(t))?);
        f_t = f_t.max(system.f_at(t)?.norm());
    }
    let mut u_const: f64 = 0.0;
    for &t in &times {
        let (um, u0, up) = (exact(t - delta), exact(t), exact(t + delta));
        let d2 = (&up - &u0 * 2.0 + &um) / (delta * delta);
        let d1 = (&up - &um) / (2.0 * delta);
        let mut term = energy_norm(&metric, &d2)? + energy_norm(&metric, &system.c().apply(&d1))?;
        if !constant_b {
            let bdot = (system.b_at(&up)?.to_dense() - system.b_at(&um)?.to_dense()) / (2.0 * delta);
            term += spectral_norm(&bdot) * e_factor * u_max_e;
        }
        u_const = u_const.max(term);
    }

    let rec = integrate(system, &SchemeConfig::imex(k, steps)?, &metric)?;
    if let Some(step) = rec.blow_up {
        return Err(Error::Structure(format!("implicit-explicit run blew up at step {step}")));
    }
    let mut gamma: f64 = 0.0;
    if !constant_b {
        for n in 0..steps {
            let ut = exact(n as f64 * k);
            let e = &ut - &rec.states[n];
            let en = e.norm();
            if en == 0.0 {
                continue;
            }
            let diff = system.b_at(&ut)?.to_dense() - system.b_at(&rec.states[n])?.to_dense();
            gamma = gamma.max((diff * exact((n + 1) as f64 * k)).norm() / en);
        }
    }
    let gamma_e = gamma * (1.0 + k * lmax).sqrt();

    let res = 1.0 / (1.0 + k * lmin);
    let a = 1.0 + k * gamma_e * res;
    let mut bound_series = Vec::with_capacity(steps + 1);
    let mut r = 0.0;
    bound_series.push(r);
    for _ in 0..steps {
        r = a * r + k * res * k * u_const;
        bound_series.push(r);
    }
    let measured_errors = rec
        .states
        .iter()
        .enumerate()
        .map(|(n, u)| energy_norm(&metric, &(exact(n as f64 * k) - u)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConvergenceBound {
        gamma_e,
        u_const,
        lambda_min_c: lmin,
        k,
        t_final,
        predicted_error: r,
        f_t,
        measured_errors,
        bound_series,
    })
}

/// Result of checking a trajectory against a bound at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub pass: bool,
    /// Step (index of the later state) where `value - bound` is largest.
    pub worst_step: Option<usize>,
    pub worst_value: f64,
    pub worst_bound: f64,
    pub note: String,
}

impl AuditOutcome {
    fn not_applicable(note: impl Into<String>) -> Self {
        AuditOutcome {
            pass: false,
            worst_step: None,
            worst_value: f64::NAN,
            worst_bound: f64::NAN,
            note: note.into(),
        }
    }
}

fn guard(traj: &TrajectoryRecord, metric: &EnergyMetric) -> Option<AuditOutcome> {
    if traj.scheme.variant() != Scheme::ImexStable {
        return Some(AuditOutcome::not_applicable(format!(
            "variant mismatch: bound holds for the implicit-explicit scheme, trajectory used {}",
            traj.scheme.variant().name()
        )));
    }
    if traj.blow_up.is_some() {
        return Some(AuditOutcome::not_applicable("trajectory blew up"));
    }
    if metric.k() != traj.scheme.k() {
        return Some(AuditOutcome::not_applicable(format!(
            "metric timestep {} differs from trajectory timestep {}",
            metric.k(),
            traj.scheme.k()
        )));
    }
    None
}

fn audit_series(values: &[f64], bounds: impl Iterator<Item = f64>, note: &str) -> AuditOutcome {
    let mut out = AuditOutcome {
        pass: true,
        worst_step: None,
        worst_value: f64::NAN,
        worst_bound: f64::NAN,
        note: note.to_string(),
    };
    let mut worst = f64::NEG_INFINITY;
    for (n, (v, b)) in values.iter().zip(bounds).enumerate() {
        let gap = v - b;
        if !(gap <= 0.0) {
            out.pass = false;
        }
        if gap > worst || gap.is_nan() {
            worst = if gap.is_nan() { f64::INFINITY } else { gap };
            out.worst_step = Some(n + 1);
            out.worst_value = *v;
            out.worst_bound = b;
        }
    }
    out
}

fn energy_series(traj: &TrajectoryRecord, metric: &EnergyMetric) -> Result<Vec<f64>> {
    traj.states.iter().map(|u| energy_norm(metric, u)).collect()
}

/// Audit slack for the inhomogeneous bound, relative to `1 + ||u_0||_E`.
pub const STABILITY_AUDIT_SLACK: f64 = 1e-9;

/// `||u_{n+1}||_E <= ||u_0||_E + k/(1 + k lambda_min(C)) sum_{p<=n} ||f_{p+1}||_E`
/// (plus slack) at every step. The forcing norms are the ones recorded
/// during integration.
pub fn stability_bound_audit(traj: &TrajectoryRecord, metric: &EnergyMetric) -> AuditOutcome {
    if let Some(g) = guard(traj, metric) {
        return g;
    }
    let norms = match energy_series(traj, metric) {
        Ok(n) => n,
        Err(e) => return AuditOutcome::not_applicable(e.to_string()),
    };
    let u0 = norms[0];
    let slack = STABILITY_AUDIT_SLACK * (1.0 + u0);
    let c = metric.k() * metric.resolvent_factor();
    let bounds = traj.forcing_energy_norms.iter().scan(0.0, move |acc, f| {
        *acc += f;
        Some(u0 + c * *acc + slack)
    });
    audit_series(&norms[1..], bounds, "inhomogeneous growth bound")
}

/// `||u_{n+1}||_E <= ||u_n||_E + slack ||u_0||_E` at every step; the
/// homogeneous decay property, meaningful for `f = 0`.
pub fn monotone_audit(traj: &TrajectoryRecord, metric: &EnergyMetric, slack: f64) -> AuditOutcome {
    if let Some(g) = guard(traj, metric) {
        return g;
    }
    let norms = match energy_series(traj, metric) {
        Ok(n) => n,
        Err(e) => return AuditOutcome::not_applicable(e.to_string()),
    };
    let abs = slack * norms[0];
    audit_series(&norms[1..], norms.iter().map(|e| e + abs), "energy decay")
}

/// `||u_n - u*||_E` along a trajectory.
pub fn shifted_energy_series(traj: &TrajectoryRecord, metric: &EnergyMetric, u_star: &DVector<f64>) -> Result<Vec<f64>> {
    traj.states.iter().map(|u| energy_norm(metric, &(u - u_star))).collect()
}

/// `s_{n+1} <= s_n + rel s_0` for a sequence of norms: nonincreasing up to
/// a per-step slack measured against the initial size, as in the energy
/// decay check. (A slack relative to `s_n` itself cannot be met once the
/// sequence reaches rounding level.)
pub fn nonincreasing_audit(series: &[f64], rel: f64) -> AuditOutcome {
    if series.is_empty() {
        return AuditOutcome::not_applicable("empty series");
    }
    let abs = rel * series[0];
    audit_series(&series[1..], series.iter().map(|s| s + abs), "nonincreasing")
}

/// One line of an audit report.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub check_name: String,
    pub case_id: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl AuditRow {
    pub fn new(check_name: &str, case_id: impl Into<String>, value: f64, bound: f64) -> Self {
        AuditRow {
            check_name: check_name.to_string(),
            case_id: case_id.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    fn from_outcome(check_name: &str, case_id: String, o: &AuditOutcome) -> Self {
        AuditRow {
            check_name: check_name.to_string(),
            case_id,
            value: o.worst_value,
            bound: o.worst_bound,
            pass: o.pass,
        }
    }

    fn failed(check_name: &str, case_id: String) -> Self {
        AuditRow {
            check_name: check_name.to_string(),
            case_id,
            value: f64::NAN,
            bound: f64::NAN,
            pass: false,
        }
    }
}

pub fn audit_csv(rows: &[AuditRow], preamble: Option<&str>) -> CsvTable {
    let mut t = CsvTable::new();
    if let Some(p) = preamble {
        t.comment(p);
    }
    t.header(&["check_name", "case_id", "value", "bound", "pass"]);
    for r in rows {
        t.row([
            r.check_name.clone(),
            r.case_id.clone(),
            fmt_num(r.value),
            fmt_num(r.bound),
            r.pass.to_string(),
        ]);
    }
    t
}

fn fmt_k(k: f64) -> String {
    format!("{k:e}")
}

/// Lemma check on `cases` random triples with `n` in `2..=30`; case `i`
/// draws from seed `suite_seed + i`.
pub fn contraction_suite(suite_seed: u64, cases: usize) -> Vec<AuditRow> {
    (0..cases)
        .into_par_iter()
        .map(|i| {
            let (d1, d2, d3) = random_contraction_triple(suite_seed + i as u64, 2, 30);
            match check_contraction(&d1, &d2, &d3) {
                Ok(w) => AuditRow::new("contraction_lemma", i.to_string(), w.spectral_norm_f, 1.0 + CONTRACTION_SLACK),
                Err(_) => AuditRow::failed("contraction_lemma", i.to_string()),
            }
        })
        .collect()
}

/// Energy-norm step contraction on random systems, `B` evaluated at `u_0`.
pub fn step_contraction_suite(suite_seed: u64, cases: usize, ks: &[f64]) -> Vec<AuditRow> {
    let spec = RandomSystemSpec::default();
    (0..cases)
        .into_par_iter()
        .flat_map_iter(|i| {
            let sys = random_system(suite_seed + i as u64, &spec);
            ks.iter()
                .map(|&k| {
                    let id = format!("{i}:k={}", fmt_k(k));
                    match sys.as_ref().map_err(Clone::clone).and_then(|s| check_step_contraction(s, k, s.initial_state())) {
                        Ok(v) => AuditRow::new("step_contraction", id, v, 1.0 + CONTRACTION_SLACK),
                        Err(_) => AuditRow::failed("step_contraction", id),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Runs the implicit-explicit scheme on each random system for each `k`
/// and applies `audit` to the trajectory.
fn trajectory_suite(
    check_name: &'static str,
    suite_seed: u64,
    cases: usize,
    ks: &[f64],
    steps: usize,
    spec: RandomSystemSpec,
    audit: impl Fn(&TrajectoryRecord, &EnergyMetric) -> AuditOutcome + Sync,
) -> Vec<AuditRow> {
    (0..cases)
        .into_par_iter()
        .flat_map_iter(|i| {
            let run = |sys: &OdeSystem, base: &EnergyMetric, k: f64| -> Result<AuditOutcome> {
                let metric = base.with_timestep(k)?;
                let rec = integrate(sys, &SchemeConfig::imex(k, steps)?, &metric)?;
                Ok(audit(&rec, &metric))
            };
            let sys = random_system(suite_seed + i as u64, &spec);
            let base = sys
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|s| EnergyMetric::shared(Arc::new(s.c().clone()), 1.0));
            ks.iter()
                .map(|&k| {
                    let id = format!("{i}:k={}", fmt_k(k));
                    match (&sys, &base) {
                        (Ok(s), Ok(b)) => match run(s, b, k) {
                            Ok(o) => AuditRow::from_outcome(check_name, id, &o),
                            Err(_) => AuditRow::failed(check_name, id),
                        },
                        _ => AuditRow::failed(check_name, id),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Unforced energy decay with slack `1e-12 ||u_0||_E` per step.
pub fn monotone_suite(suite_seed: u64, cases: usize, ks: &[f64], steps: usize) -> Vec<AuditRow> {
    let spec = RandomSystemSpec::default().with_forcing(ForcingKind::Zero);
    trajectory_suite("energy_decay", suite_seed, cases, ks, steps, spec, |rec, m| {
        monotone_audit(rec, m, 1e-12)
    })
}

/// Inhomogeneous growth bound with smooth time-dependent forcing.
pub fn inhomogeneous_suite(suite_seed: u64, cases: usize, ks: &[f64], steps: usize) -> Vec<AuditRow> {
    let spec = RandomSystemSpec::default().with_forcing(ForcingKind::Smooth);
    trajectory_suite("inhomogeneous_bound", suite_seed, cases, ks, steps, spec, stability_bound_audit)
}
