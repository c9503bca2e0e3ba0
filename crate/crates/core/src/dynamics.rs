//! Forward Brownian corruption and exact-score reverse integration.
//!
//! The forward process is sampled in one shot from its Gaussian propagator.
//! The reverse process is Euler–Maruyama on
//! `x ← x + σ²·∇log p_t(x)·Δt + σ√Δt·ξ` over a descending time grid, with
//! the score evaluated exactly by [`crate::thermo`]. Free-energy descent uses
//! the same step with the drift written as `−β∇F̃`.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::linalg::{self, Matrix};
use crate::numeric::{linear_grid, log_grid};
use crate::rng::{fill_standard_normal, StreamId};
use crate::targets::Target;
use crate::thermo::{self, beta};
use crate::{Error, Result};

/// Smallest terminal time a schedule may reach.
pub const T_MIN_FLOOR: f64 = 1e-4;
/// Reverse runs abort once `‖x‖` exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spacing {
    Linear,
    Log,
}

/// Descending time grid from `t_end` to `t_min` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub t_end: f64,
    pub t_min: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl Schedule {
    pub fn new(t_end: f64, t_min: f64, steps: usize, spacing: Spacing) -> Result<Self> {
        let s = Self {
            t_end,
            t_min,
            steps,
            spacing,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn log(t_end: f64, t_min: f64, steps: usize) -> Result<Self> {
        Self::new(t_end, t_min, steps, Spacing::Log)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_min >= T_MIN_FLOOR) {
            return Err(Error::InvalidSchedule("t_min must be at least 1e-4".to_string()));
        }
        if !(self.t_end.is_finite() && self.t_end > self.t_min) {
            return Err(Error::InvalidSchedule("t_end must exceed t_min".to_string()));
        }
        if self.steps < 2 {
            return Err(Error::InvalidSchedule("at least two steps are required".to_string()));
        }
        Ok(())
    }

    /// The `steps + 1` grid times, descending.
    pub fn times(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Linear => linear_grid(self.t_end, self.t_min, self.steps + 1),
            Spacing::Log => log_grid(self.t_end, self.t_min, self.steps + 1),
        }
    }
}

/// Times and states of one run; states are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub dim: usize,
    pub stream: Option<StreamId>,
}

impl Trajectory {
    fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n * dim),
            dim,
            stream: None,
        }
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times.iter().copied().zip(self.states.chunks_exact(self.dim.max(1)))
    }
}

/// Exact draw from the forward propagator: `y0 + √(tσ²)·ξ`.
pub fn forward_sample<R: Rng + ?Sized>(y0: &[f64], t: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidState("t must be positive".to_string()));
    }
    let mut out = vec![0.0; y0.len()];
    fill_standard_normal(rng, &mut out);
    let s = (t * sigma * sigma).sqrt();
    out.iter_mut().zip(y0).for_each(|(o, y)| *o = y + s * *o);
    Ok(out)
}

/// `n` draws from the diffused marginal `p_t`: a target sample pushed
/// through the forward propagator.
pub fn sample_marginal<R: Rng + ?Sized>(target: &Target, t: f64, sigma: f64, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    target
        .sample(n, rng)
        .into_iter()
        .map(|y| forward_sample(&y, t, sigma, rng))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drift {
    Score,
    FreeEnergy,
}

/// Knobs shared by the reverse integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    /// Multiplies the `σ√Δt·ξ` term; 0 gives the deterministic flow.
    pub noise_scale: f64,
    /// Append the posterior-mean estimate `⟨y⟩(x, t_min)` as a final state at
    /// `t = 0`.
    pub denoise_final: bool,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            noise_scale: 1.0,
            denoise_final: true,
        }
    }
}

impl Integrator {
    pub fn noiseless() -> Self {
        Self {
            noise_scale: 0.0,
            ..Self::default()
        }
    }

    pub fn reverse<R: Rng + ?Sized>(
        &self,
        x_init: &[f64],
        schedule: &Schedule,
        target: &Target,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.run(x_init, schedule, target, sigma, Drift::Score, |_, _, xi| fill_standard_normal(rng, xi))
    }

    pub fn free_energy_descent<R: Rng + ?Sized>(
        &self,
        x_init: &[f64],
        schedule: &Schedule,
        target: &Target,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.run(x_init, schedule, target, sigma, Drift::FreeEnergy, |_, _, xi| fill_standard_normal(rng, xi))
    }

    /// Reverse integration with caller-supplied standard-normal increments:
    /// `noise(step, dt, ξ)` fills `ξ` for the step of length `dt`.
    pub fn reverse_with_noise(
        &self,
        x_init: &[f64],
        schedule: &Schedule,
        target: &Target,
        sigma: f64,
        noise: impl FnMut(usize, f64, &mut [f64]),
    ) -> Result<Trajectory> {
        self.run(x_init, schedule, target, sigma, Drift::Score, noise)
    }

    pub fn free_energy_descent_with_noise(
        &self,
        x_init: &[f64],
        schedule: &Schedule,
        target: &Target,
        sigma: f64,
        noise: impl FnMut(usize, f64, &mut [f64]),
    ) -> Result<Trajectory> {
        self.run(x_init, schedule, target, sigma, Drift::FreeEnergy, noise)
    }

    fn run(
        &self,
        x_init: &[f64],
        schedule: &Schedule,
        target: &Target,
        sigma: f64,
        drift: Drift,
        mut noise: impl FnMut(usize, f64, &mut [f64]),
    ) -> Result<Trajectory> {
        schedule.validate()?;
        if x_init.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: x_init.len(),
            });
        }
        if x_init.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("x_init has non-finite entries".to_string()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidState("sigma must be positive".to_string()));
        }
        let d = target.dim();
        let times = schedule.times();
        let mut traj = Trajectory::with_capacity(d, times.len() + 1);
        let mut x = x_init.to_vec();
        let mut mean = vec![0.0; d];
        let mut xi = vec![0.0; d];
        let mut scratch = Vec::new();
        let s2 = sigma * sigma;
        traj.push(times[0], &x);
        for (k, w) in times.windows(2).enumerate() {
            let (t, t_next) = (w[0], w[1]);
            let dt = t - t_next;
            let b = beta(t, sigma);
            thermo::mean_into(&x, b, target, &mut scratch, &mut mean)?;
            noise(k, dt, &mut xi);
            let amp = self.noise_scale * sigma * dt.sqrt();
            for i in 0..d {
                let v = match drift {
                    Drift::Score => b * (mean[i] - x[i]),
                    Drift::FreeEnergy => -b * (x[i] - mean[i]),
                };
                x[i] += s2 * v * dt + amp * xi[i];
            }
            traj.push(t_next, &x);
            if !finite_and_bounded(&x) {
                return Err(Error::NonFiniteState {
                    step: k + 1,
                    partial: Box::new(traj),
                });
            }
        }
        if self.denoise_final {
            let b = beta(schedule.t_min, sigma);
            thermo::mean_into(&x, b, target, &mut scratch, &mut mean)?;
            traj.push(0.0, &mean);
        }
        Ok(traj)
    }
}

fn finite_and_bounded(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite()) && linalg::norm(x) <= DIVERGENCE_NORM
}

/// Reverse SDE with unit noise and a final denoising step.
pub fn reverse_integrate<R: Rng + ?Sized>(
    x_init: &[f64],
    schedule: &Schedule,
    target: &Target,
    sigma: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    Integrator::default().reverse(x_init, schedule, target, sigma, rng)
}

pub fn free_energy_descent<R: Rng + ?Sized>(
    x_init: &[f64],
    schedule: &Schedule,
    target: &Target,
    sigma: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    Integrator::default().free_energy_descent(x_init, schedule, target, sigma, rng)
}

/// Result of descending `F̃` at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenDescent {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Noiseless descent `x ← x + η(⟨y⟩ − x)` on `F̃(·, t)` with `t` held fixed,
/// until `‖∇F̃‖ < tol`.
pub fn frozen_time_descent(
    x_init: &[f64],
    t: f64,
    target: &Target,
    sigma: f64,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FrozenDescent> {
    thermo::ThermoState::new(x_init.to_vec(), t, sigma)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter("step size must lie in (0, 1]".to_string()));
    }
    let b = beta(t, sigma);
    let d = target.dim();
    let mut x = x_init.to_vec();
    let mut mean = vec![0.0; d];
    let mut scratch = Vec::new();
    let mut g = f64::INFINITY;
    for it in 0..max_iter {
        thermo::mean_into(&x, b, target, &mut scratch, &mut mean)?;
        g = linalg::dist(&x, &mean);
        if g < tol {
            return Ok(FrozenDescent {
                x,
                iterations: it,
                gradient_norm: g,
            });
        }
        x.iter_mut().zip(&mean).for_each(|(xi, m)| *xi += eta * (m - *xi));
    }
    Err(Error::NoConvergence {
        residual: g,
        iterations: max_iter,
    })
}

/// Mean and covariance of the Gaussian moment-matched to `p_{t_start}`.
pub fn late_start_moments(t_start: f64, target: &Target, sigma: f64) -> Result<(Vec<f64>, Matrix)> {
    if !(t_start > 0.0 && t_start.is_finite()) {
        return Err(Error::InvalidState("t_start must be positive".to_string()));
    }
    let d = target.dim();
    let cov = target
        .covariance()
        .add(&Matrix::identity(d).scaled(t_start * sigma * sigma));
    Ok((target.mean(), cov))
}

/// `n` draws from `N(E_φ[y], Cov_φ(y) + t_start σ² I)`.
pub fn late_start_init<R: Rng + ?Sized>(
    t_start: f64,
    target: &Target,
    sigma: f64,
    rng: &mut R,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let (mean, cov) = late_start_moments(t_start, target, sigma)?;
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::InvalidState("late-start covariance is not positive definite".to_string()))?;
    let d = target.dim();
    let mut xi = vec![0.0; d];
    Ok((0..n)
        .map(|_| {
            fill_standard_normal(rng, &mut xi);
            let mut x = l.mul_vec(&xi);
            x.iter_mut().zip(&mean).for_each(|(v, m)| *v += m);
            x
        })
        .collect())
}
