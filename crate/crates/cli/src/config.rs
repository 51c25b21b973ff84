//! Experiment configuration: defaults, `key=value` files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use imex_stab::discretize::AntiDiffusion;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Surfaces,
    EnergyCompare,
    ShiftedDecay,
    ExplicitBlowup,
    VerifyLemmas,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Surfaces,
        Experiment::EnergyCompare,
        Experiment::ShiftedDecay,
        Experiment::ExplicitBlowup,
        Experiment::VerifyLemmas,
        Experiment::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Surfaces => "surfaces",
            Experiment::EnergyCompare => "energy-compare",
            Experiment::ShiftedDecay => "shifted-decay",
            Experiment::ExplicitBlowup => "explicit-blowup",
            Experiment::VerifyLemmas => "verify-lemmas",
            Experiment::Convergence => "convergence",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                CliError::Config(format!("unknown experiment {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// `avg:q`, `avg` (q = 2) or `proj`.
pub fn parse_mode(s: &str) -> Result<AntiDiffusion, CliError> {
    match s.trim() {
        "proj" => Ok(AntiDiffusion::Projection),
        "avg" => Ok(AntiDiffusion::Averaging { q: 2 }),
        other => {
            let q = other
                .strip_prefix("avg:")
                .and_then(|q| q.parse::<u32>().ok())
                .filter(|&q| q > 0)
                .ok_or_else(|| CliError::Config(format!("bad mode {other:?}; expected avg:q or proj")))?;
            Ok(AntiDiffusion::Averaging { q })
        }
    }
}

pub fn mode_name(mode: AntiDiffusion) -> String {
    match mode {
        AntiDiffusion::Averaging { q } => format!("avg:{q}"),
        AntiDiffusion::Projection => "proj".into(),
    }
}

/// Settings given explicitly, by flag or config file; `None` means
/// "use the default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub m: Option<usize>,
    pub theta_deg: Option<f64>,
    pub epsilon: Option<f64>,
    pub eps0: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub mode: Option<AntiDiffusion>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad value {v:?} for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| parse_num(key, x)).collect()
}

impl Overrides {
    /// Sets one `key=value` pair; keys are the long flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key.trim() {
            "experiment" => self.experiment = Some(value.trim().parse()?),
            "m" => self.m = Some(parse_num(key, value)?),
            "theta-deg" | "theta_deg" => self.theta_deg = Some(parse_num(key, value)?),
            "epsilon" => self.epsilon = Some(parse_num(key, value)?),
            "eps0" => self.eps0 = Some(parse_list(key, value)?),
            "k" => self.k = Some(parse_list(key, value)?),
            "steps" => self.steps = Some(parse_num(key, value)?),
            "mode" => self.mode = Some(parse_mode(value)?),
            "seed" => self.seed = Some(parse_num(key, value)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => return Err(CliError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `key=value` lines; `#` starts a comment.
    pub fn from_config_text(text: &str) -> Result<Self, CliError> {
        let mut o = Overrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
            o.set(key, value)
                .map_err(|e| CliError::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(o)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_config_text(&text)
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            experiment: self.experiment.or(lower.experiment),
            m: self.m.or(lower.m),
            theta_deg: self.theta_deg.or(lower.theta_deg),
            epsilon: self.epsilon.or(lower.epsilon),
            eps0: self.eps0.or(lower.eps0),
            k: self.k.or(lower.k),
            steps: self.steps.or(lower.steps),
            mode: self.mode.or(lower.mode),
            seed: self.seed.or(lower.seed),
            out: self.out.or(lower.out),
        }
    }
}

pub const DEFAULT_EPS0_SWEEP: [f64; 4] = [1e-1, 5e-3, 1e-3, 1e-4];
pub const CONVERGENCE_KS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
/// Horizon of the energy comparison runs.
pub const ENERGY_HORIZON: f64 = 100.0;
/// Steps of the fixed-length runs.
pub const DEFAULT_STEPS: usize = 1000;
/// Horizon of the convergence benchmarks.
pub const CONVERGENCE_HORIZON: f64 = 1.0;

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub m: usize,
    pub theta_deg: f64,
    pub epsilon: f64,
    pub eps0: Vec<f64>,
    pub k: Vec<f64>,
    /// Steps per run; `None` means the experiment's own choice (1000 for the
    /// fixed-horizon runs, `T/k` for the horizon-matched ones).
    pub steps: Option<usize>,
    pub mode: AntiDiffusion,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn defaults(experiment: Experiment) -> Self {
        let (eps0, k) = match experiment {
            Experiment::Surfaces => (DEFAULT_EPS0_SWEEP.to_vec(), vec![10.0]),
            Experiment::EnergyCompare | Experiment::ShiftedDecay => (vec![1e-4], vec![1.0, 0.1]),
            Experiment::ExplicitBlowup => (vec![1e-4], vec![1.0]),
            Experiment::VerifyLemmas | Experiment::Convergence => (vec![1e-4], CONVERGENCE_KS.to_vec()),
        };
        ExperimentSpec {
            experiment,
            m: 31,
            theta_deg: 17.0,
            epsilon: 1e-4,
            eps0,
            k,
            steps: None,
            mode: AntiDiffusion::Averaging { q: 2 },
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }

    pub fn resolve(o: Overrides) -> Result<Self, CliError> {
        let experiment = o
            .experiment
            .ok_or_else(|| CliError::Config("no experiment given (--experiment)".into()))?;
        let d = Self::defaults(experiment);
        let spec = ExperimentSpec {
            experiment,
            m: o.m.unwrap_or(d.m),
            theta_deg: o.theta_deg.unwrap_or(d.theta_deg),
            epsilon: o.epsilon.unwrap_or(d.epsilon),
            eps0: o.eps0.unwrap_or(d.eps0),
            k: o.k.unwrap_or(d.k),
            steps: o.steps.or(d.steps),
            mode: o.mode.unwrap_or(d.mode),
            seed: o.seed.unwrap_or(d.seed),
            out_dir: o.out.unwrap_or(d.out_dir),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.theta_deg.is_finite() {
            return bad("theta-deg must be finite".into());
        }
        if self.eps0.is_empty() || self.eps0.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return bad(format!("eps0 values must be nonnegative, got {:?}", self.eps0));
        }
        if self.k.is_empty() || self.k.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return bad(format!("timesteps must be positive, got {:?}", self.k));
        }
        if self.mode == AntiDiffusion::Projection && !(self.m + 1).is_multiple_of(2) {
            return bad(format!("projection mode needs m + 1 even, got m = {}", self.m));
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.theta_deg.to_radians()
    }

    /// Steps for a run with timestep `k` when the experiment integrates to
    /// a fixed horizon.
    pub fn steps_to_horizon(&self, k: f64, horizon: f64) -> usize {
        self.steps.unwrap_or_else(|| (horizon / k).round() as usize)
    }

    pub fn steps_or(&self, default: usize) -> usize {
        self.steps.unwrap_or(default)
    }

    /// Steps of each run, in `k` order.
    pub fn resolved_steps(&self) -> Vec<usize> {
        match self.experiment {
            Experiment::Surfaces | Experiment::ExplicitBlowup => vec![self.steps_or(DEFAULT_STEPS)],
            Experiment::EnergyCompare | Experiment::ShiftedDecay => {
                self.k.iter().map(|&k| self.steps_to_horizon(k, ENERGY_HORIZON)).collect()
            }
            Experiment::VerifyLemmas | Experiment::Convergence => self.k.iter().map(|&k| (CONVERGENCE_HORIZON / k).round() as usize).collect(),
        }
    }

    /// The resolved parameters as one `key=value` line. The output directory
    /// is left out so that artifacts do not depend on where they are written.
    pub fn params_line(&self) -> String {
        format!(
            "params experiment={} m={} theta_deg={} epsilon={} eps0={} k={} steps={} mode={} seed={}",
            self.experiment.name(),
            self.m,
            self.theta_deg,
            fmt_short(self.epsilon),
            join(&self.eps0),
            join(&self.k),
            self.resolved_steps().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            mode_name(self.mode),
            self.seed
        )
    }
}

/// Shortest round-tripping scientific form, e.g. `5e-3`.
pub fn fmt_short(x: f64) -> String {
    format!("{x:e}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_short(x)).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.params_line())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_experiments() {
        let s = ExperimentSpec::defaults(Experiment::Surfaces);
        assert_eq!(s.eps0, vec![1e-1, 5e-3, 1e-3, 1e-4]);
        assert_eq!(s.k, vec![10.0]);
        assert_eq!(s.steps_or(1000), 1000);
        assert_eq!((s.m, s.theta_deg, s.epsilon), (31, 17.0, 1e-4));
        assert_eq!(s.mode, AntiDiffusion::Averaging { q: 2 });
        let e = ExperimentSpec::defaults(Experiment::EnergyCompare);
        assert_eq!(e.k.iter().map(|&k| e.steps_to_horizon(k, 100.0)).collect::<Vec<_>>(), vec![100, 1000]);
    }

    #[test]
    fn config_text_and_precedence() {
        let file = Overrides::from_config_text("# sweep\nexperiment = surfaces\neps0=1e-2, 1e-3\nmode=proj\nsteps=5\n").unwrap();
        let mut flags = Overrides::default();
        flags.set("steps", "7").unwrap();
        let spec = ExperimentSpec::resolve(flags.over(file)).unwrap();
        assert_eq!(spec.eps0, vec![1e-2, 1e-3]);
        assert_eq!(spec.steps, Some(7));
        assert_eq!(spec.mode, AntiDiffusion::Projection);
    }

    #[test]
    fn config_errors() {
        assert!(Overrides::from_config_text("nonsense").is_err());
        assert!(Overrides::from_config_text("colour=red").is_err());
        assert!(parse_mode("avg:0").is_err());
        assert_eq!(parse_mode("avg:3").unwrap(), AntiDiffusion::Averaging { q: 3 });
        let mut o = Overrides::default();
        o.set("experiment", "surfaces").unwrap();
        o.set("m", "30").unwrap();
        o.set("mode", "proj").unwrap();
        assert!(ExperimentSpec::resolve(o).is_err());
        assert!(ExperimentSpec::resolve(Overrides::default()).is_err());
    }

    #[test]
    fn params_line_is_stable() {
        let s = ExperimentSpec::defaults(Experiment::Surfaces);
        assert_eq!(
            s.params_line(),
            "params experiment=surfaces m=31 theta_deg=17 epsilon=1e-4 eps0=1e-1,5e-3,1e-3,1e-4 k=1e1 steps=1000 mode=avg:2 seed=0"
        );
    }
}
