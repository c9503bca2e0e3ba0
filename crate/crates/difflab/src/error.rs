use std::fmt;
use std::path::Path;

use crate::config::ConfigError;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        RunError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<difflab_core::Error> for RunError {
    fn from(e: difflab_core::Error) -> Self {
        RunError::Numerical(e.to_string())
    }
}
