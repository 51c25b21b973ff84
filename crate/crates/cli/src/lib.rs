//! Runs the convection-diffusion experiments and verification suites and
//! writes their CSV artifacts.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;

use config::{Experiment, ExperimentSpec};
use experiments::ExperimentReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] imex_stab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 4,
            CliError::Core(
                imex_stab::Error::InvalidParameter(_) | imex_stab::Error::UnsupportedGrid(_) | imex_stab::Error::Parse { .. },
            ) => 4,
            _ => 1,
        }
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport, CliError> {
    match spec.experiment {
        Experiment::Surfaces => experiments::run_surfaces(spec),
        Experiment::EnergyCompare => experiments::run_energy_compare(spec),
        Experiment::ShiftedDecay => experiments::run_shifted_decay(spec),
        Experiment::ExplicitBlowup => experiments::run_explicit_blowup(spec),
        Experiment::VerifyLemmas => experiments::run_verifications(spec),
        Experiment::Convergence => experiments::run_convergence(spec),
    }
}

/// Thread cap from `IMEX_STAB_THREADS`; `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("IMEX_STAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("IMEX_STAB_THREADS must be a positive integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("IMEX_STAB_THREADS: {e}"))),
    }
}

/// [`run`] inside a pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentReport, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| run(spec))
}
