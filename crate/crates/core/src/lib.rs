//! Equilibrium statistical mechanics of generative diffusion on analytically
//! tractable targets.
//!
//! A noisy state `x` at diffusion time `t` induces a Boltzmann distribution
//! over clean microstates `y` with Hamiltonian
//! `H(y; x, t) = β(t)(½‖y‖² − x·y) − log φ(y)` and `β(t) = 1/(tσ²)`.
//! Every quantity here (partition function, free energy, score, covariance,
//! susceptibility) is evaluated exactly: by log-domain enumeration for
//! discrete supports, or by one-dimensional angular quadrature for the
//! hypersphere.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration and
//! parallel drivers live in the `difflab` companion crate.

#![no_std]
// `!(x > 0.0)` rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod bath;
pub mod criticality;
pub mod dynamics;
mod error;
pub mod hopfield;
pub mod linalg;
pub mod numeric;
pub mod rem;
pub mod rng;
pub mod targets;
pub mod thermo;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use targets::{SupportAtom, Target, TargetKind, TargetSpec};
pub use thermo::{ThermoReport, ThermoState};
