use alloc::boxed::Box;
use alloc::string::String;

use crate::dynamics::Trajectory;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("coupling matrix must be symmetric with a zero diagonal")]
    NonSymmetricCoupling,

    #[error("invalid weights: {0}")]
    BadWeights(String),

    #[error("dimension {dim} exceeds the enumeration limit of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("target has continuous support and cannot be enumerated")]
    ContinuousSupport,

    #[error("microstate is not in the support of the target")]
    OffSupport,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid thermodynamic state: {0}")]
    InvalidState(String),

    #[error("angular quadrature did not converge with {nodes} nodes")]
    QuadratureNotConverged { nodes: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("state became non-finite or diverged at step {step}")]
    NonFiniteState { step: usize, partial: Box<Trajectory> },

    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("no sign change of the stability criterion in the scanned range")]
    NoBracket,

    #[error("fit for {name} rejected: r² = {r_squared}")]
    FitRejected { name: &'static str, r_squared: f64 },

    #[error("self-consistent susceptibility diverges (singular resummation)")]
    SingularResummation,

    #[error("dataset exponent M = {m} exceeds 24")]
    SizeOverflow { m: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("condensation time needs a non-zero field")]
    ZeroField,

    #[error("generative bath requires a target with constant-norm microstates")]
    NonConstantNorm,

    #[error("pure-state variance diverges at the critical point")]
    CriticalDivergence,

    #[error("Hopfield/free-energy gradient mismatch {max_deviation:e} at probe {probe}")]
    MismatchDetected { max_deviation: f64, probe: usize },
}
