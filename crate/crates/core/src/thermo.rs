//! Exact equilibrium quantities at a thermodynamic state `(x, t, σ)`.
//!
//! Discrete supports are summed in the log domain. The hypersphere reduces
//! to the polar angle θ between `x` and `y`, whose density on `[0, π]` is
//! proportional to `sin^{d−2} θ`; the partition function, mean and
//! covariance then follow from the angular moments of `exp(κ cos θ)` with
//! `κ = β‖x‖r`, integrated by composite Gauss–Legendre with panel doubling.
//! The hypersphere uses its normalized uniform measure, so `log φ` is a
//! constant that is left out of the Hamiltonian.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{self, Matrix};
use crate::numeric::{gauss_legendre, log_cosh, logsumexp};
use crate::targets::Target;
use crate::{Error, Result};

/// Smallest diffusion time accepted by any thermodynamic evaluation.
pub const T_FLOOR: f64 = 1e-9;

const QUAD_BASE_NODES: usize = 16;
const QUAD_MAX_PANELS: usize = 1 << 10;
const QUAD_REL_TOL: f64 = 1e-10;

/// External field `x`, diffusion time `t` and noise scale `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoState {
    pub x: Vec<f64>,
    pub t: f64,
    pub sigma: f64,
}

impl ThermoState {
    pub fn new(x: Vec<f64>, t: f64, sigma: f64) -> Result<Self> {
        validate(&x, t, sigma)?;
        Ok(Self { x, t, sigma })
    }

    /// Pseudo inverse temperature β(t) = 1/(tσ²).
    pub fn beta(&self) -> f64 {
        beta(self.t, self.sigma)
    }

    /// Pseudo temperature tσ².
    pub fn temperature(&self) -> f64 {
        self.t * self.sigma * self.sigma
    }
}

pub fn beta(t: f64, sigma: f64) -> f64 {
    1.0 / (t * sigma * sigma)
}

fn validate(x: &[f64], t: f64, sigma: f64) -> Result<()> {
    if !(t.is_finite() && t > T_FLOOR) {
        return Err(Error::InvalidState("t must exceed the 1e-9 floor".to_string()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidState("sigma must be positive".to_string()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("x has non-finite entries".to_string()));
    }
    Ok(())
}

fn check_dim(x: &[f64], target: &Target) -> Result<()> {
    if x.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Every equilibrium quantity at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoReport {
    pub log_z: f64,
    pub free_energy: f64,
    pub regularized_free_energy: f64,
    pub posterior_mean: Vec<f64>,
    pub score: Vec<f64>,
    pub covariance: Matrix,
    pub susceptibility: Matrix,
    pub score_jacobian: Matrix,
}

/// Boltzmann moments at field `x` and inverse temperature `beta`.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub log_z: f64,
    pub mean: Vec<f64>,
    pub cov: Option<Matrix>,
}

pub(crate) fn moments(x: &[f64], beta: f64, target: &Target, with_cov: bool) -> Result<Moments> {
    check_dim(x, target)?;
    match target.sphere_radius() {
        Some(radius) => sphere_moments(x, beta, radius, with_cov),
        None => atom_moments(x, beta, target, with_cov),
    }
}

fn atom_moments(x: &[f64], beta: f64, target: &Target, with_cov: bool) -> Result<Moments> {
    let d = target.dim();
    let mut logits = Vec::with_capacity(target.atom_count().unwrap_or(0));
    let mut mean = vec![0.0; d];
    let log_z = atom_mean_into(x, beta, target, &mut logits, &mut mean)?;
    let cov = if with_cov {
        let mut cov = Matrix::zeros(d);
        let mut c = vec![0.0; d];
        target.for_each_atom(|j, y, _| {
            let w = (logits[j] - log_z).exp();
            if w == 0.0 {
                return;
            }
            for i in 0..d {
                c[i] = y[i] - mean[i];
            }
            for i in 0..d {
                let wi = w * c[i];
                for k in 0..d {
                    cov[(i, k)] += wi * c[k];
                }
            }
        })?;
        Some(cov)
    } else {
        None
    };
    Ok(Moments { log_z, mean, cov })
}

fn atom_mean_into(x: &[f64], beta: f64, target: &Target, logits: &mut Vec<f64>, out: &mut [f64]) -> Result<f64> {
    logits.clear();
    target.for_each_atom(|_, y, lw| {
        logits.push(lw - beta * (0.5 * linalg::norm_sq(y) - linalg::dot(x, y)));
    })?;
    let log_z = logsumexp(logits);
    out.fill(0.0);
    target.for_each_atom(|j, y, _| {
        let w = (logits[j] - log_z).exp();
        if w != 0.0 {
            out.iter_mut().zip(y).for_each(|(m, v)| *m += w * v);
        }
    })?;
    Ok(log_z)
}

/// Posterior mean written into `out`, reusing `scratch` across calls.
/// Returns `log Z`.
pub(crate) fn mean_into(x: &[f64], beta: f64, target: &Target, scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<f64> {
    check_dim(x, target)?;
    match target.sphere_radius() {
        Some(radius) => {
            let m = sphere_moments(x, beta, radius, false)?;
            out.copy_from_slice(&m.mean);
            Ok(m.log_z)
        }
        None => atom_mean_into(x, beta, target, scratch, out),
    }
}

/// Moments of the polar angle under `exp(κ cos θ) sin^{d−2} θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularMoments {
    /// `log E[exp(κ cos θ)]` under the uniform measure on the sphere.
    pub log_mean_exp: f64,
    pub cos: f64,
    pub cos2: f64,
    pub sin2: f64,
    /// Quadrature nodes used (0 for the closed-form `d = 1` case).
    pub nodes: usize,
}

pub fn angular_moments(dim: usize, kappa: f64) -> Result<AngularMoments> {
    if dim == 1 {
        let th = kappa.tanh();
        return Ok(AngularMoments {
            log_mean_exp: log_cosh(kappa),
            cos: th,
            cos2: 1.0,
            sin2: 0.0,
            nodes: 0,
        });
    }
    let (gx, gw) = gauss_legendre(QUAD_BASE_NODES);
    let power = (dim - 2) as f64;
    let mut prev: Option<AngularMoments> = None;
    let mut panels = 1;
    let mut logs = Vec::new();
    let mut logs0 = Vec::new();
    let mut cosines = Vec::new();
    while panels <= QUAD_MAX_PANELS {
        logs.clear();
        logs0.clear();
        cosines.clear();
        let h = PI / panels as f64;
        for p in 0..panels {
            let a = p as f64 * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                let theta = a + 0.5 * h * (1.0 + xi);
                let c = theta.cos();
                let base = if power == 0.0 { 0.0 } else { power * theta.sin().ln() } + (0.5 * h * wi).ln();
                logs.push(kappa * c + base);
                logs0.push(base);
                cosines.push(c);
            }
        }
        let log_i = logsumexp(&logs);
        let log_i0 = logsumexp(&logs0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for (l, c) in logs.iter().zip(&cosines) {
            let w = (l - log_i).exp();
            s1 += w * c;
            s2 += w * c * c;
        }
        let m = AngularMoments {
            log_mean_exp: log_i - log_i0,
            cos: s1,
            cos2: s2,
            sin2: 1.0 - s2,
            nodes: panels * QUAD_BASE_NODES,
        };
        if let Some(p) = prev {
            let close = |a: f64, b: f64| (a - b).abs() <= QUAD_REL_TOL * a.abs().max(1.0);
            if close(m.log_mean_exp, p.log_mean_exp) && close(m.cos, p.cos) && close(m.cos2, p.cos2) {
                return Ok(m);
            }
        }
        prev = Some(m);
        panels *= 2;
    }
    Err(Error::QuadratureNotConverged {
        nodes: QUAD_MAX_PANELS * QUAD_BASE_NODES,
    })
}

fn sphere_moments(x: &[f64], beta: f64, radius: f64, with_cov: bool) -> Result<Moments> {
    let d = x.len();
    let xn = linalg::norm(x);
    let q = angular_moments(d, beta * xn * radius)?;
    let log_z = -0.5 * beta * radius * radius + q.log_mean_exp;
    let dir: Vec<f64> = if xn > 0.0 {
        x.iter().map(|v| v / xn).collect()
    } else {
        vec![0.0; d]
    };
    let mean = dir.iter().map(|u| radius * q.cos * u).collect();
    let cov = with_cov.then(|| {
        let r2 = radius * radius;
        let along = r2 * (q.cos2 - q.cos * q.cos);
        if d == 1 {
            return Matrix::diagonal(&[along]);
        }
        let across = r2 * q.sin2 / (d - 1) as f64;
        let mut c = Matrix::identity(d).scaled(across);
        if xn > 0.0 {
            for i in 0..d {
                for k in 0..d {
                    c[(i, k)] += (along - across) * dir[i] * dir[k];
                }
            }
        }
        c
    });
    Ok(Moments { log_z, mean, cov })
}

/// `H(y; x, t) = β(½‖y‖² − x·y) − log φ(y)`.
pub fn hamiltonian(y: &[f64], state: &ThermoState, target: &Target) -> Result<f64> {
    check_dim(&state.x, target)?;
    let log_phi = target.log_density_at(y)?;
    Ok(state.beta() * (0.5 * linalg::norm_sq(y) - linalg::dot(&state.x, y)) - log_phi)
}

pub fn log_partition(state: &ThermoState, target: &Target) -> Result<f64> {
    Ok(moments(&state.x, state.beta(), target, false)?.log_z)
}

/// Helmholtz free energy `−log Z / β`, plus `½‖x‖²` when `regularized`.
pub fn free_energy(state: &ThermoState, target: &Target, regularized: bool) -> Result<f64> {
    let f = -log_partition(state, target)? / state.beta();
    Ok(if regularized {
        f + 0.5 * linalg::norm_sq(&state.x)
    } else {
        f
    })
}

/// Boltzmann average ⟨y⟩ = −∇F.
pub fn posterior_mean(state: &ThermoState, target: &Target) -> Result<Vec<f64>> {
    Ok(moments(&state.x, state.beta(), target, false)?.mean)
}

/// `∇ log p_t(x) = β(⟨y⟩ − x)`.
pub fn score(state: &ThermoState, target: &Target) -> Result<Vec<f64>> {
    let b = state.beta();
    let mean = posterior_mean(state, target)?;
    Ok(mean.iter().zip(&state.x).map(|(m, x)| b * (m - x)).collect())
}

/// `∇F̃ = x − ⟨y⟩`.
pub fn regularized_free_energy_gradient(state: &ThermoState, target: &Target) -> Result<Vec<f64>> {
    let mean = posterior_mean(state, target)?;
    Ok(state.x.iter().zip(&mean).map(|(x, m)| x - m).collect())
}

/// Free-energy descent drift `−β∇F̃`; equal to the score.
pub fn free_energy_drift(state: &ThermoState, target: &Target) -> Result<Vec<f64>> {
    let b = state.beta();
    Ok(regularized_free_energy_gradient(state, target)?
        .iter()
        .map(|g| -b * g)
        .collect())
}

/// `log p_t(x)` including the `(2πtσ²)^{−d/2}` normalization.
pub fn log_marginal(state: &ThermoState, target: &Target) -> Result<f64> {
    let b = state.beta();
    let d = state.x.len() as f64;
    let log_z = log_partition(state, target)?;
    Ok(-0.5 * d * (2.0 * PI * state.temperature()).ln() - 0.5 * b * linalg::norm_sq(&state.x) + log_z)
}

/// Boltzmann covariance `C = ⟨yyᵀ⟩ − ⟨y⟩⟨y⟩ᵀ`.
pub fn covariance(state: &ThermoState, target: &Target) -> Result<Matrix> {
    Ok(moments(&state.x, state.beta(), target, true)?
        .cov
        .expect("covariance requested"))
}

/// Bare response `∂⟨y⟩_i/∂x_j = βC_ij`.
pub fn susceptibility(state: &ThermoState, target: &Target) -> Result<Matrix> {
    Ok(covariance(state, target)?.scaled(state.beta()))
}

/// `∂(score)_i/∂x_j = β²C_ij − βδ_ij`.
pub fn score_jacobian(state: &ThermoState, target: &Target) -> Result<Matrix> {
    let b = state.beta();
    let chi = susceptibility(state, target)?;
    Ok(chi.sub(&Matrix::identity(chi.dim())).scaled(b))
}

pub fn thermo_report(state: &ThermoState, target: &Target) -> Result<ThermoReport> {
    let b = state.beta();
    let m = moments(&state.x, b, target, true)?;
    let cov = m.cov.expect("covariance requested");
    let free_energy = -m.log_z / b;
    let susceptibility = cov.scaled(b);
    let score_jacobian = susceptibility.sub(&Matrix::identity(cov.dim())).scaled(b);
    Ok(ThermoReport {
        log_z: m.log_z,
        free_energy,
        regularized_free_energy: free_energy + 0.5 * linalg::norm_sq(&state.x),
        score: m.mean.iter().zip(&state.x).map(|(mu, x)| b * (mu - x)).collect(),
        posterior_mean: m.mean,
        covariance: cov,
        susceptibility,
        score_jacobian,
    })
}
