use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use imex_stab_cli::config::{parse_mode, ExperimentSpec, Overrides};
use imex_stab_cli::{run_with_threads, thread_cap, CliError};

/// Reproduces the convection-diffusion experiments and runs the
/// stability/convergence verification suites.
///
/// Exit codes: 0 success, 2 failed check, 3 blow-up of a run that should be
/// stable, 4 configuration error, 1 any other runtime error.
#[derive(Debug, Parser)]
#[command(name = "imex-stab", version)]
struct Args {
    /// surfaces | energy-compare | shifted-decay | explicit-blowup | verify-lemmas | convergence
    #[arg(long)]
    experiment: Option<String>,
    /// Interior grid points per dimension
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    theta_deg: Option<f64>,
    /// Physical viscosity
    #[arg(long)]
    epsilon: Option<f64>,
    /// Artificial viscosity; repeat or comma-separate for a sweep
    #[arg(long, value_delimiter = ',')]
    eps0: Vec<f64>,
    /// Timestep(s), comma-separated
    #[arg(long, value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// avg:q or proj
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file; explicit flags take precedence over it
    #[arg(long)]
    config: Option<PathBuf>,
}

fn overrides(args: Args) -> Result<Overrides, CliError> {
    let file = match &args.config {
        Some(p) => Overrides::from_config_file(p)?,
        None => Overrides::default(),
    };
    let flags = Overrides {
        experiment: args.experiment.map(|e| e.parse()).transpose()?,
        m: args.m,
        theta_deg: args.theta_deg,
        epsilon: args.epsilon,
        eps0: (!args.eps0.is_empty()).then_some(args.eps0),
        k: (!args.k.is_empty()).then_some(args.k),
        steps: args.steps,
        mode: args.mode.as_deref().map(parse_mode).transpose()?,
        seed: args.seed,
        out: args.out,
    };
    Ok(flags.over(file))
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(4);
        }
    };
    let result = overrides(args)
        .and_then(ExperimentSpec::resolve)
        .and_then(|spec| Ok((thread_cap()?, spec)))
        .and_then(|(threads, spec)| run_with_threads(&spec, threads));
    match result {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            for b in &report.blow_ups {
                eprintln!("blow-up: {b}");
            }
            for a in &report.audit_failures {
                eprintln!("failed: {a}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
