//! Experiment runner for `difflab-core`: configuration files, CSV/JSON
//! artifacts and the `difflab` command line.

pub mod config;
pub mod error;
pub mod experiments;
pub mod table;
pub mod targets;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::{Config, ConfigError};
pub use error::RunError;
pub use experiments::{run_experiment, Experiment, Outcome};

#[derive(Debug, Parser)]
#[command(name = "difflab", version, about = "Run a named diffusion-thermodynamics experiment")]
pub struct Cli {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a configuration value, `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Thread cap from `DIFFLAB_THREADS`; `None` leaves rayon's default.
pub fn thread_cap() -> Result<Option<usize>, ConfigError> {
    match std::env::var("DIFFLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError {
                location: "environment".into(),
                field: "DIFFLAB_THREADS".into(),
                message: format!("expected a positive integer, got '{v}'"),
            }),
        },
    }
}

fn execute(cli: &Cli) -> Result<Outcome, RunError> {
    let mut cfg = Config::load(&cli.config)?;
    for s in &cli.set {
        cfg.set(s)?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| RunError::Io(e.to_string()))?;
    pool.install(|| run_experiment(cli.experiment, &cfg, &cli.out))
}

/// Parses `args`, runs the experiment and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}: {}", cli.experiment.name(), outcome.message);
            0
        }
        Err(e) => {
            eprintln!("difflab {}: {e}", cli.experiment.name());
            e.exit_code()
        }
    }
}
