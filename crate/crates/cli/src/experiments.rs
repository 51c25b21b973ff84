//! The experiment runners. Each writes CSV files into the spec's output
//! directory and returns what it found; the caller maps that to an exit code.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use imex_stab::analysis::{
    contraction_suite, convergence_bound, convergence_study, inhomogeneous_suite, monotone_suite,
    nonincreasing_audit, shifted_energy_series, stability_bound_audit, step_contraction_suite, truncation_error,
    AuditRow, ConvergenceBound, ConvergencePoint, Reference,
};
use imex_stab::csv::{fmt_num, CsvTable};
use imex_stab::discretize::{assemble_system, grid_snapshot, AssembledProblem, Grid2D, PdeParams};
use imex_stab::stepper::{fixed_point, integrate, Scheme, SchemeConfig, TrajectoryRecord};
use imex_stab::{EnergyMetric, Forcing, OdeSystem, Operator, SkewField};

use crate::config::{fmt_short, ExperimentSpec, CONVERGENCE_HORIZON, DEFAULT_STEPS, ENERGY_HORIZON};
use crate::CliError;

/// The explicit-advection run counts as blown up once its energy exceeds
/// this multiple of its first nonzero energy.
pub const GROWTH_FACTOR: f64 = 1e6;
/// Relative per-step slack for the shifted-energy monotonicity check.
pub const SHIFTED_RTOL: f64 = 1e-12;

/// Summary of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub k: f64,
    pub steps: usize,
    pub completed_steps: usize,
    /// Step at which the stepper's divergence detector fired.
    pub blow_up: Option<usize>,
    pub max_energy: f64,
    pub final_energy: f64,
}

impl RunSummary {
    fn new(label: String, rec: &TrajectoryRecord) -> Self {
        RunSummary {
            label,
            k: rec.scheme.k(),
            steps: rec.scheme.steps(),
            completed_steps: rec.completed_steps(),
            blow_up: rec.blow_up,
            max_energy: rec.energy_norms.iter().copied().fold(0.0, f64::max),
            final_energy: *rec.energy_norms.last().expect("trajectory holds u0"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub files: Vec<PathBuf>,
    pub runs: Vec<RunSummary>,
    /// Checks that failed, one line each.
    pub audit_failures: Vec<String>,
    /// Blow-ups in runs that are supposed to be stable.
    pub blow_ups: Vec<String>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// 3 for an unexpected blow-up, 2 for a failed check, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if !self.blow_ups.is_empty() {
            3
        } else if !self.audit_failures.is_empty() {
            2
        } else {
            0
        }
    }

    fn absorb(&mut self, other: ExperimentReport) {
        self.files.extend(other.files);
        self.runs.extend(other.runs);
        self.audit_failures.extend(other.audit_failures);
        self.blow_ups.extend(other.blow_ups);
        self.notes.extend(other.notes);
    }
}

fn write_csv(dir: &Path, name: &str, table: &CsvTable) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, table.as_str())?;
    Ok(path)
}

fn pde_params(spec: &ExperimentSpec, eps0: f64) -> PdeParams {
    PdeParams {
        theta: spec.theta(),
        epsilon: spec.epsilon,
        epsilon0: eps0,
        mode: spec.mode,
    }
}

pub fn paper_problem(spec: &ExperimentSpec, eps0: f64) -> Result<AssembledProblem, CliError> {
    Ok(assemble_system(&Grid2D::new(spec.m)?, &pde_params(spec, eps0))?)
}

fn structure_line(p: &AssembledProblem) -> String {
    match &p.report {
        Some(r) => format!(
            "structure valid={} a_minus_c_margin={} eps0={}",
            r.valid,
            fmt_num(r.a_minus_c_psd_margin),
            fmt_short(p.params.epsilon0)
        ),
        None => "structure unchecked".into(),
    }
}

fn note_structure(report: &mut ExperimentReport, p: &AssembledProblem) {
    if let Some(r) = &p.report {
        if !r.valid {
            report.notes.push(format!(
                "eps0={}: structure check failed ({}); stability is not guaranteed",
                fmt_short(p.params.epsilon0),
                r.failures().join(", ")
            ));
        }
    }
}

/// Metric with the eigenvalue extremes of `C` computed once per problem.
fn base_metric(system: &OdeSystem) -> Result<EnergyMetric, CliError> {
    Ok(EnergyMetric::new(system.c().clone(), 1.0)?)
}

fn run(system: &OdeSystem, base: &EnergyMetric, k: f64, steps: usize, scheme: Scheme) -> Result<(TrajectoryRecord, EnergyMetric), CliError> {
    let metric = base.with_timestep(k)?;
    let rec = integrate(system, &SchemeConfig::new(k, steps, scheme)?, &metric)?;
    Ok((rec, metric))
}

fn run_id(eps0: f64, k: f64, steps: usize) -> String {
    format!("eps0={};k={};N={}", fmt_short(eps0), fmt_short(k), steps)
}

/// Final-state grid snapshots, one file per `eps0`.
pub fn run_surfaces(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let k = spec.k[0];
    let steps = spec.steps_or(DEFAULT_STEPS);
    let results: Vec<Result<ExperimentReport, CliError>> = spec
        .eps0
        .par_iter()
        .map(|&eps0| {
            let mut report = ExperimentReport::default();
            let prob = paper_problem(spec, eps0)?;
            note_structure(&mut report, &prob);
            let (rec, _) = run(&prob.system, &base_metric(&prob.system)?, k, steps, Scheme::ImexStable)?;
            let mut table = grid_snapshot(
                &prob.grid,
                rec.final_state(),
                Some(&format!("{}\n{}", spec.params_line(), structure_line(&prob))),
            )?;
            if let Some(step) = rec.blow_up {
                table.row(["blow_up".to_string(), step.to_string(), "nan".into(), "nan".into(), "nan".into()]);
                report.blow_ups.push(format!("surfaces eps0={}: blow-up at step {step}", fmt_short(eps0)));
            }
            report.runs.push(RunSummary::new(run_id(eps0, k, steps), &rec));
            report
                .files
                .push(write_csv(&spec.out_dir, &format!("surface_eps0_{}.csv", fmt_short(eps0)), &table)?);
            Ok(report)
        })
        .collect();
    let mut report = ExperimentReport::default();
    for r in results {
        report.absorb(r?);
    }
    Ok(report)
}

/// Runs every `(eps0, k)` pair to the energy horizon; sweep points run
/// concurrently, results are kept in input order.
/// One eps0 value: the assembled problem, its reference metric and one run per timestep.
type HorizonRuns = (AssembledProblem, EnergyMetric, Vec<(TrajectoryRecord, EnergyMetric)>);

fn horizon_runs(spec: &ExperimentSpec) -> Result<Vec<HorizonRuns>, CliError> {
    spec.eps0
        .par_iter()
        .map(|&eps0| {
            let prob = paper_problem(spec, eps0)?;
            let base = base_metric(&prob.system)?;
            let runs = spec
                .k
                .par_iter()
                .map(|&k| run(&prob.system, &base, k, spec.steps_to_horizon(k, ENERGY_HORIZON), Scheme::ImexStable))
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok((prob, base, runs))
        })
        .collect()
}

/// `t, ||u_n||_E, run_id` for trajectories of different timesteps.
pub fn run_energy_compare(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::default();
    let mut table = CsvTable::new();
    table.comment(&spec.params_line());
    table.header(&["t", "energy_norm", "run_id"]);
    for (prob, _, runs) in horizon_runs(spec)? {
        note_structure(&mut report, &prob);
        for (rec, metric) in runs {
            let id = run_id(prob.params.epsilon0, rec.scheme.k(), rec.scheme.steps());
            for (t, e) in rec.times().zip(&rec.energy_norms) {
                table.row([fmt_num(t), fmt_num(*e), id.clone()]);
            }
            if let Some(step) = rec.blow_up {
                table.row(["blow_up".to_string(), step.to_string(), id.clone()]);
                report.blow_ups.push(format!("energy-compare {id}: blow-up at step {step}"));
            } else {
                let audit = stability_bound_audit(&rec, &metric);
                if !audit.pass {
                    report.audit_failures.push(format!(
                        "energy-compare {id}: growth bound violated at step {:?} ({} > {})",
                        audit.worst_step, audit.worst_value, audit.worst_bound
                    ));
                }
            }
            report.runs.push(RunSummary::new(id, &rec));
        }
    }
    report.files.push(write_csv(&spec.out_dir, "energy_compare.csv", &table)?);
    Ok(report)
}

/// `||u_n - u*||_E` with `u*` the fixed point of the scheme, which must not
/// increase for a linear constant-coefficient problem.
pub fn run_shifted_decay(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::default();
    let mut table = CsvTable::new();
    table.comment(&spec.params_line());
    let mut body = Vec::new();
    let mut reference_notes = Vec::new();
    for (prob, _, runs) in horizon_runs(spec)? {
        note_structure(&mut report, &prob);
        let eps0 = prob.params.epsilon0;
        let u_star = match fixed_point(&prob.system) {
            Ok(u) => {
                reference_notes.push(format!("eps0={}: reference=fixed point of (A+B-C)u=g", fmt_short(eps0)));
                u
            }
            Err(e) => {
                let finest = runs
                    .iter()
                    .min_by(|a, b| a.0.scheme.k().total_cmp(&b.0.scheme.k()))
                    .expect("at least one timestep");
                reference_notes.push(format!(
                    "eps0={}: reference=final state of the k={} run (fixed point unavailable: {e})",
                    fmt_short(eps0),
                    fmt_short(finest.0.scheme.k())
                ));
                finest.0.final_state().clone()
            }
        };
        for (rec, metric) in runs {
            let id = run_id(eps0, rec.scheme.k(), rec.scheme.steps());
            if let Some(step) = rec.blow_up {
                body.push(["blow_up".to_string(), step.to_string(), "nan".into(), id.clone()]);
                report.blow_ups.push(format!("shifted-decay {id}: blow-up at step {step}"));
                report.runs.push(RunSummary::new(id, &rec));
                continue;
            }
            let shifted = shifted_energy_series(&rec, &metric, &u_star)?;
            for ((t, s), e) in rec.times().zip(&shifted).zip(&rec.energy_norms) {
                body.push([fmt_num(t), fmt_num(*s), fmt_num(*e), id.clone()]);
            }
            let audit = nonincreasing_audit(&shifted, SHIFTED_RTOL);
            if !audit.pass {
                report.audit_failures.push(format!(
                    "shifted-decay {id}: ||u_n - u*||_E increased at step {:?} ({} > {})",
                    audit.worst_step, audit.worst_value, audit.worst_bound
                ));
            }
            report.runs.push(RunSummary::new(id, &rec));
        }
    }
    for n in &reference_notes {
        table.comment(n);
    }
    table.header(&["t", "shifted_energy_norm", "energy_norm", "run_id"]);
    for row in body {
        table.row(row);
    }
    report.files.push(write_csv(&spec.out_dir, "shifted_decay.csv", &table)?);
    Ok(report)
}

/// First step whose energy exceeds [`GROWTH_FACTOR`] times the first
/// nonzero energy (or is not finite).
pub fn growth_detection(energies: &[f64]) -> Option<usize> {
    let (first, e_ref) = energies.iter().copied().enumerate().find(|&(_, e)| e != 0.0)?;
    energies
        .iter()
        .enumerate()
        .skip(first + 1)
        .find(|&(_, &e)| !e.is_finite() || e > GROWTH_FACTOR * e_ref)
        .map(|(n, _)| n)
}

/// Both variants at the same timestep; the implicit-explicit run must stay
/// within its growth bound, the explicit-advection run is expected to grow.
pub fn run_explicit_blowup(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let mut report = ExperimentReport::default();
    let k = spec.k[0];
    let steps = spec.steps_or(DEFAULT_STEPS);
    let eps0 = spec.eps0[0];
    let prob = paper_problem(spec, eps0)?;
    note_structure(&mut report, &prob);
    let base = base_metric(&prob.system)?;
    let runs: Vec<Result<(TrajectoryRecord, EnergyMetric), CliError>> = [Scheme::ImexStable, Scheme::ExplicitAdvection]
        .par_iter()
        .map(|&s| run(&prob.system, &base, k, steps, s))
        .collect();
    let mut runs = runs.into_iter();
    let (imex, metric) = runs.next().expect("two runs")?;
    let (explicit, _) = runs.next().expect("two runs")?;

    let mut table = CsvTable::new();
    table.comment(&spec.params_line());
    let growth = growth_detection(&explicit.energy_norms);
    table.comment(&format!(
        "explicit growth_step={} divergence_step={}",
        growth.map_or("none".to_string(), |s| s.to_string()),
        explicit.blow_up.map_or("none".to_string(), |s| s.to_string())
    ));
    table.header(&["step", "t", "energy_norm", "scheme"]);
    for rec in [&imex, &explicit] {
        for (n, (t, e)) in rec.times().zip(&rec.energy_norms).enumerate() {
            table.row([n.to_string(), fmt_num(t), fmt_num(*e), rec.scheme.variant().name().to_string()]);
        }
    }

    if let Some(step) = imex.blow_up {
        report.blow_ups.push(format!("explicit-blowup: implicit-explicit run blew up at step {step}"));
    } else {
        let audit = stability_bound_audit(&imex, &metric);
        if !audit.pass {
            report.audit_failures.push(format!(
                "explicit-blowup: implicit-explicit growth bound violated at step {:?}",
                audit.worst_step
            ));
        }
    }
    let advective = !matches!(prob.system.skew(), SkewField::Constant(b) if b.is_zero());
    match growth {
        Some(step) => report.notes.push(format!("explicit-advection energy grew by {GROWTH_FACTOR:e} by step {step}")),
        None if advective => report
            .audit_failures
            .push(format!("explicit-blowup: no growth by a factor {GROWTH_FACTOR:e} within {steps} steps")),
        None => report.notes.push("no advection: both variants coincide".into()),
    }
    report.runs.push(RunSummary::new(format!("imex;k={};N={steps}", fmt_short(k)), &imex));
    report
        .runs
        .push(RunSummary::new(format!("explicit;k={};N={steps}", fmt_short(k)), &explicit));
    report.files.push(write_csv(&spec.out_dir, "explicit_blowup.csv", &table)?);
    Ok(report)
}

/// A test problem with a closed-form solution.
pub struct Benchmark {
    pub name: &'static str,
    pub system: OdeSystem,
    pub exact: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

fn rotation_matrix() -> Operator {
    Operator::Dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
}

/// Scalar decay `u' = -u`, the rotation `u' = -Ju` with a vanishing
/// diffusion, and a damped rotation with a nonzero `C`.
pub fn benchmarks() -> Vec<Benchmark> {
    let zero_f = Forcing::Zero;
    let decay = OdeSystem::new(
        Operator::diagonal(&[1.0]),
        Operator::Zero(1),
        SkewField::Constant(Operator::Zero(1)),
        zero_f.clone(),
        DVector::from_element(1, 1.0),
    )
    .expect("1x1 system");
    let eps = 1e-12;
    let rotation = OdeSystem::new(
        Operator::diagonal(&[eps, eps]),
        Operator::Zero(2),
        SkewField::Constant(rotation_matrix()),
        zero_f.clone(),
        DVector::from_vec(vec![1.0, 0.0]),
    )
    .expect("2x2 system");
    let damped = OdeSystem::new(
        Operator::diagonal(&[2.0, 2.0]),
        Operator::identity(2),
        SkewField::Constant(rotation_matrix()),
        zero_f,
        DVector::from_vec(vec![1.0, 0.0]),
    )
    .expect("2x2 system");
    vec![
        Benchmark {
            name: "scalar_decay",
            system: decay,
            exact: Box::new(|t| DVector::from_element(1, (-t).exp())),
        },
        Benchmark {
            name: "rotation",
            system: rotation,
            exact: Box::new(move |t| DVector::from_vec(vec![t.cos(), t.sin()]) * (-eps * t).exp()),
        },
        Benchmark {
            name: "damped_rotation",
            system: damped,
            exact: Box::new(|t| DVector::from_vec(vec![t.cos(), t.sin()]) * (-t).exp()),
        },
    ]
}

pub struct BenchmarkResult {
    pub name: &'static str,
    pub points: Vec<ConvergencePoint>,
    pub bounds: Vec<ConvergenceBound>,
}

const BOUND_SAMPLES: usize = 1000;

pub fn run_benchmarks(ks: &[f64]) -> Result<Vec<BenchmarkResult>, CliError> {
    benchmarks()
        .par_iter()
        .map(|b| {
            let points = convergence_study(&b.system, CONVERGENCE_HORIZON, ks, Reference::Exact(&*b.exact))?;
            let bounds = ks
                .iter()
                .map(|&k| convergence_bound(&b.system, &*b.exact, CONVERGENCE_HORIZON, k, BOUND_SAMPLES))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(BenchmarkResult {
                name: b.name,
                points,
                bounds,
            })
        })
        .collect()
}

fn benchmark_rows(results: &[BenchmarkResult]) -> Vec<AuditRow> {
    let mut rows = Vec::new();
    for r in results {
        for p in &r.points {
            if let Some(o) = p.observed_order {
                rows.push(AuditRow::new("convergence_order", format!("{}:k={}", r.name, fmt_short(p.k)), (o - 1.0).abs(), 0.1));
            }
        }
        for b in &r.bounds {
            let id = format!("{}:k={}", r.name, fmt_short(b.k));
            let mut row = AuditRow::new("global_error_bound", id, *b.measured_errors.last().unwrap_or(&f64::NAN), b.predicted_error);
            row.pass = b.holds();
            rows.push(row);
        }
    }
    rows
}

/// Global errors, observed orders and the measured error bound.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let results = run_benchmarks(&spec.k)?;
    let mut report = ExperimentReport::default();
    let mut table = CsvTable::new();
    table.comment(&spec.params_line());
    table.header(&["benchmark", "k", "steps", "error_e", "observed_order", "gamma_e", "u_const", "bound", "bound_holds"]);
    for r in &results {
        for (p, b) in r.points.iter().zip(&r.bounds) {
            table.row([
                r.name.to_string(),
                fmt_num(p.k),
                p.steps.to_string(),
                fmt_num(p.error_e),
                p.observed_order.map_or_else(String::new, fmt_num),
                fmt_num(b.gamma_e),
                fmt_num(b.u_const),
                fmt_num(b.predicted_error),
                b.holds().to_string(),
            ]);
        }
    }
    for row in benchmark_rows(&results) {
        if !row.pass {
            report.audit_failures.push(format!("{} {}: {} > {}", row.check_name, row.case_id, row.value, row.bound));
        }
    }
    report.files.push(write_csv(&spec.out_dir, "convergence.csv", &table)?);
    Ok(report)
}

/// `tau` for constant and exponential manufactured solutions.
pub fn truncation_rows() -> Result<Vec<AuditRow>, CliError> {
    let mut rows = Vec::new();
    let b = &benchmarks()[2];
    let u = DVector::from_vec(vec![0.4, -0.9]);
    let f = b.system.a().apply(&u) + b.system.b_at(&u)?.apply(&u) - b.system.c().apply(&u);
    let sys = b.system.clone().with_forcing(Forcing::Constant(f))?;
    let constant = move |_t: f64| u.clone();
    for k in [1.0, 0.1, 1e-3] {
        let tau = truncation_error(&sys, &constant, 0.5, k)?.norm();
        rows.push(AuditRow::new("truncation_constant", format!("k={}", fmt_short(k)), tau, 1e-12));
    }
    let decay = &benchmarks()[0];
    let tau = truncation_error(&decay.system, &*decay.exact, 0.0, 0.1)?[0];
    let closed_form = ((-0.1f64).exp() - 1.0) / 0.1 + (-0.1f64).exp();
    rows.push(AuditRow::new("truncation_scalar", "k=1e-1", (tau - closed_form).abs(), 1e-5));
    Ok(rows)
}

pub const VERIFY_STABILITY_KS: [f64; 6] = [1e-3, 1e-1, 1.0, 10.0, 100.0, 1e3];
pub const VERIFY_CONTRACTION_KS: [f64; 3] = [1e-3, 1.0, 1e3];
pub const VERIFY_FORCED_KS: [f64; 3] = [1e-2, 1e-1, 1.0];

/// All randomized suites plus the convergence and truncation checks, as one
/// audit report.
pub fn run_verifications(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    let seed = spec.seed;
    let mut rows = contraction_suite(seed, 500);
    rows.extend(step_contraction_suite(seed, 200, &VERIFY_CONTRACTION_KS));
    rows.extend(monotone_suite(seed, 100, &VERIFY_STABILITY_KS, 200));
    rows.extend(inhomogeneous_suite(seed, 50, &VERIFY_FORCED_KS, 200));
    rows.extend(benchmark_rows(&run_benchmarks(&spec.k)?));
    rows.extend(truncation_rows()?);

    let mut report = ExperimentReport::default();
    for r in rows.iter().filter(|r| !r.pass) {
        report
            .audit_failures
            .push(format!("{} case {}: {} > {}", r.check_name, r.case_id, r.value, r.bound));
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    report.notes.push(format!("{passed}/{} checks passed", rows.len()));
    let table = imex_stab::analysis::audit_csv(&rows, Some(&spec.params_line()));
    report.files.push(write_csv(&spec.out_dir, "audit.csv", &table)?);
    Ok(report)
}
