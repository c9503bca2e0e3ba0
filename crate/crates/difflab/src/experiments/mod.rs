//! Named experiments. Each one reads and validates its parameters before
//! any computation starts, then writes its artifacts and a manifest.

mod bath;
mod bifurcation;
mod exponents;
mod hopfield;
mod latestart;
mod rem;
mod sample;
mod score_check;

use std::path::{Path, PathBuf};
use std::time::Instant;

use difflab_core::dynamics::{Schedule, Spacing};
use difflab_core::linalg;
use difflab_core::Target;
use serde_json::{json, Value};

use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::{emit_csv, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Experiment {
    Bifurcation,
    Exponents,
    Sample,
    Latestart,
    Rem,
    Bath,
    Hopfield,
    #[value(name = "score-check")]
    ScoreCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Bifurcation,
        Experiment::Exponents,
        Experiment::Sample,
        Experiment::Latestart,
        Experiment::Rem,
        Experiment::Bath,
        Experiment::Hopfield,
        Experiment::ScoreCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bifurcation => "bifurcation",
            Experiment::Exponents => "exponents",
            Experiment::Sample => "sample",
            Experiment::Latestart => "latestart",
            Experiment::Rem => "rem",
            Experiment::Bath => "bath",
            Experiment::Hopfield => "hopfield",
            Experiment::ScoreCheck => "score-check",
        }
    }
}

/// Keys every experiment reads.
#[derive(Debug, Clone, Copy)]
pub struct Common {
    pub seed: u64,
    pub sigma: f64,
}

impl Common {
    fn from_config(cfg: &Config) -> Result<Self, ConfigError> {
        let seed = cfg.get_or("run.seed", 0u64)?;
        let sigma: f64 = cfg.get("model.sigma")?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(cfg.invalid("model.sigma", "must be positive"));
        }
        Ok(Self { seed, sigma })
    }
}

/// Collects artifacts written into one output directory.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), RunError> {
        emit_csv(table, &self.dir.join(name))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::io(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

trait Job: Send + Sync {
    /// Writes artifacts and returns a one-line summary for the console.
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError>;
}

fn prepare(exp: Experiment, cfg: &Config, common: Common) -> Result<Box<dyn Job>, ConfigError> {
    Ok(match exp {
        Experiment::Bifurcation => Box::new(bifurcation::Bifurcation::from_config(cfg, common)?),
        Experiment::Exponents => Box::new(exponents::Exponents::from_config(cfg, common)?),
        Experiment::Sample => Box::new(sample::Sample::from_config(cfg, common)?),
        Experiment::Latestart => Box::new(latestart::LateStart::from_config(cfg, common)?),
        Experiment::Rem => Box::new(rem::Rem::from_config(cfg, common)?),
        Experiment::Bath => Box::new(bath::Bath::from_config(cfg, common)?),
        Experiment::Hopfield => Box::new(hopfield::Hopfield::from_config(cfg, common)?),
        Experiment::ScoreCheck => Box::new(score_check::ScoreCheck::from_config(cfg, common)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub message: String,
    pub artifacts: Vec<String>,
}

/// Validates `cfg`, runs `exp` and writes artifacts plus `manifest.json`
/// into `out`. On a numerical failure the manifest is still written and
/// flags whatever was produced as partial.
pub fn run_experiment(exp: Experiment, cfg: &Config, out: &Path) -> Result<Outcome, RunError> {
    let common = Common::from_config(cfg)?;
    let job = prepare(exp, cfg, common)?;
    cfg.finish()?;
    std::fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;
    let mut artifacts = Artifacts::new(out);
    let start = Instant::now();
    let result = job.run(&mut artifacts);
    let wall = start.elapsed().as_secs_f64();
    let (status, error) = match &result {
        Ok(_) => ("ok", Value::Null),
        Err(e) => (
            match e {
                RunError::Numerical(_) => "numerical_failure",
                RunError::Config(_) => "config_error",
                RunError::Io(_) => "io_error",
            },
            Value::String(e.to_string()),
        ),
    };
    let manifest = json!({
        "experiment": exp.name(),
        "config_source": cfg.source(),
        "config": cfg.snapshot(),
        "seed": common.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "status": status,
        "partial": result.is_err(),
        "error": error,
        "artifacts": artifacts.written,
    });
    let mut side = Artifacts::new(out);
    side.json("manifest.json", &manifest)?;
    result.map(|message| Outcome {
        message,
        artifacts: artifacts.written,
    })
}

/// `[schedule]` section.
fn schedule_from_config(cfg: &Config, default_t_end: f64) -> Result<Schedule, ConfigError> {
    let t_end = cfg.get_or("schedule.t_end", default_t_end)?;
    let t_min = cfg.get_or("schedule.t_min", 1e-3)?;
    let steps = cfg.get_or("schedule.steps", 2000usize)?;
    let spacing = match cfg.get_or("schedule.spacing", "log".to_string())?.as_str() {
        "log" => Spacing::Log,
        "linear" => Spacing::Linear,
        other => return Err(cfg.invalid("schedule.spacing", format!("expected log or linear, got '{other}'"))),
    };
    Schedule::new(t_end, t_min, steps, spacing).map_err(|e| cfg.invalid("schedule.t_end", e.to_string()))
}

fn require_enumerable(cfg: &Config, target: &Target) -> Result<Vec<Vec<f64>>, ConfigError> {
    target
        .enumerate_support()
        .map(|atoms| atoms.into_iter().map(|a| a.point).collect())
        .map_err(|e| cfg.invalid("target.kind", e.to_string()))
}

/// Index of the atom nearest to `x` and the distance to it.
fn nearest_atom(atoms: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    atoms
        .iter()
        .enumerate()
        .map(|(j, a)| (j, linalg::dist(a, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty support")
}

fn frequencies(atoms: &[Vec<f64>], terminal: &[Vec<f64>]) -> Vec<f64> {
    let mut counts = vec![0usize; atoms.len()];
    for x in terminal {
        counts[nearest_atom(atoms, x).0] += 1;
    }
    counts.iter().map(|&c| c as f64 / terminal.len() as f64).collect()
}

fn positive(cfg: &Config, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(cfg.invalid(key, "must be positive"))
    }
}

fn at_least(cfg: &Config, key: &str, v: usize, min: usize) -> Result<usize, ConfigError> {
    if v >= min {
        Ok(v)
    } else {
        Err(cfg.invalid(key, format!("must be at least {min}")))
    }
}

/// JSON number, or `null` when not finite.
fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}
