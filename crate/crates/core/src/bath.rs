//! The multi-site generative bath.
//!
//! `K` replicated microstates `y^μ` drawn from the atoms of a constant-norm
//! target interact through
//! `H_K = β(w/2 Σ_{μ≠ν} y^μ·y^ν − Σ_μ y^μ·h) − Σ_μ log φ(y^μ)` with the
//! ferromagnetic mean-field weight `w = −1/K` and the bath inverse
//! temperature equal to `β(t)`. As `K → ∞` the average `ȳ` obeys the same
//! self-consistency as the order parameter in [`crate::criticality`].

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::criticality::{self, FixedPoint, Stability};
use crate::dynamics::{Schedule, Trajectory, DIVERGENCE_NORM};
use crate::linalg::{self, Matrix};
use crate::numeric::{bisect, logsumexp, mean_stderr};
use crate::rng::{fill_standard_normal, stream};
use crate::targets::Target;
use crate::thermo::{self, beta};
use crate::{Error, Result};

/// Largest number of joint configurations [`exact_gibbs`] will enumerate.
pub const MAX_GIBBS_STATES: usize = 1 << 20;
/// Field strength used to select a pure state along `x`.
pub const PURE_STATE_FIELD: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;
const CRITICAL_BAND: f64 = 1e-6;
const CLOSED_FORM_TOL: f64 = 1e-6;
const MAX_AUTOCORR_LAG: usize = 1000;

/// Mean-field coupling `w = −1/K`.
pub fn coupling_weight(k: usize) -> f64 {
    -1.0 / k as f64
}

struct Atoms {
    d: usize,
    points: Vec<f64>,
    log_w: Vec<f64>,
}

impl Atoms {
    fn new(target: &Target) -> Result<Self> {
        let support = target.enumerate_support()?;
        if target.constant_norm().is_none() {
            return Err(Error::NonConstantNorm);
        }
        let d = target.dim();
        let mut points = Vec::with_capacity(support.len() * d);
        let mut log_w = Vec::with_capacity(support.len());
        for a in support {
            points.extend_from_slice(&a.point);
            log_w.push(a.log_weight);
        }
        Ok(Self { d, points, log_w })
    }

    fn len(&self) -> usize {
        self.log_w.len()
    }

    fn get(&self, j: usize) -> &[f64] {
        &self.points[j * self.d..(j + 1) * self.d]
    }
}

/// One joint configuration: `sites[μ]` is the atom index of `y^μ` in the
/// target's enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct BathConfig {
    pub sites: Vec<usize>,
    pub w: f64,
    pub h: Vec<f64>,
    pub beta: f64,
}

impl BathConfig {
    /// Configuration with the mean-field weight `w = −1/K`.
    pub fn new(sites: Vec<usize>, h: Vec<f64>, beta: f64) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::InvalidParameter("a bath needs at least two sites".to_string()));
        }
        let w = coupling_weight(sites.len());
        Ok(Self { sites, w, h, beta })
    }
}

fn config_energy(atoms: &Atoms, sites: &[usize], w: f64, h: &[f64], b: f64) -> f64 {
    let d = atoms.d;
    let mut sum = vec![0.0; d];
    let mut self_overlap = 0.0;
    let mut field = 0.0;
    let mut prior = 0.0;
    for &j in sites {
        let y = atoms.get(j);
        sum.iter_mut().zip(y).for_each(|(s, v)| *s += v);
        self_overlap += linalg::norm_sq(y);
        field += linalg::dot(y, h);
        prior += atoms.log_w[j];
    }
    let pairs = linalg::norm_sq(&sum) - self_overlap;
    b * (0.5 * w * pairs - field) - prior
}

pub fn bath_energy(config: &BathConfig, target: &Target) -> Result<f64> {
    let atoms = Atoms::new(target)?;
    check_field(&config.h, atoms.d)?;
    if config.sites.iter().any(|&j| j >= atoms.len()) {
        return Err(Error::OffSupport);
    }
    Ok(config_energy(&atoms, &config.sites, config.w, &config.h, config.beta))
}

fn check_field(h: &[f64], d: usize) -> Result<()> {
    if h.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.len() });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("field has non-finite entries".to_string()));
    }
    Ok(())
}

/// Single-site Metropolis chain over the joint bath configuration.
pub struct BathChain {
    atoms: Atoms,
    sites: Vec<usize>,
    sum: Vec<f64>,
    h: Vec<f64>,
    beta: f64,
    w: f64,
    proposed: u64,
    accepted: u64,
}

impl BathChain {
    /// Starts every site on the atom most aligned with `h`, or uniformly at
    /// random when `h = 0`.
    pub fn new<R: Rng + ?Sized>(target: &Target, k: usize, t: f64, sigma: f64, h: &[f64], rng: &mut R) -> Result<Self> {
        let atoms = Atoms::new(target)?;
        check_field(h, atoms.d)?;
        thermo::ThermoState::new(h.to_vec(), t, sigma)?;
        if k < 2 {
            return Err(Error::InvalidParameter("a bath needs at least two sites".to_string()));
        }
        let n = atoms.len();
        let sites = if linalg::norm(h) > 0.0 {
            let best = (0..n)
                .max_by(|&a, &b| linalg::dot(atoms.get(a), h).total_cmp(&linalg::dot(atoms.get(b), h)))
                .expect("non-empty support");
            vec![best; k]
        } else {
            (0..k).map(|_| rng.random_range(0..n)).collect()
        };
        let mut chain = Self {
            sum: vec![0.0; atoms.d],
            atoms,
            sites,
            h: h.to_vec(),
            beta: beta(t, sigma),
            w: coupling_weight(k),
            proposed: 0,
            accepted: 0,
        };
        chain.refresh_sum();
        Ok(chain)
    }

    fn refresh_sum(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        for &j in &self.sites {
            self.sum.iter_mut().zip(self.atoms.get(j)).for_each(|(s, v)| *s += v);
        }
    }

    /// One pass of proposals over all sites in order. Each proposal moves a
    /// site to a uniformly chosen different atom.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.atoms.len();
        let d = self.atoms.d;
        for mu in 0..self.sites.len() {
            self.proposed += 1;
            if n == 1 {
                self.accepted += 1;
                continue;
            }
            let old = self.sites[mu];
            let mut new = rng.random_range(0..n - 1);
            if new >= old {
                new += 1;
            }
            let (y, y_new) = (self.atoms.get(old), self.atoms.get(new));
            let mut coupling = 0.0;
            let mut field = 0.0;
            for i in 0..d {
                let dy = y_new[i] - y[i];
                coupling += dy * (self.sum[i] - y[i]);
                field += dy * self.h[i];
            }
            let delta = self.beta * (self.w * coupling - field) - (self.atoms.log_w[new] - self.atoms.log_w[old]);
            if delta <= 0.0 || rng.random::<f64>() < (-delta).exp() {
                for i in 0..d {
                    self.sum[i] += y_new[i] - y[i];
                }
                self.sites[mu] = new;
                self.accepted += 1;
            }
        }
        self.refresh_sum();
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// `ȳ = (1/K) Σ_μ y^μ`.
    pub fn magnetization(&self) -> Vec<f64> {
        let k = self.sites.len() as f64;
        self.sum.iter().map(|s| s / k).collect()
    }

    pub fn energy(&self) -> f64 {
        config_energy(&self.atoms, &self.sites, self.w, &self.h, self.beta)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Index of the joint configuration, site 0 least significant.
    pub fn config_index(&self) -> usize {
        let n = self.atoms.len();
        self.sites.iter().rev().fold(0, |acc, &j| acc * n + j)
    }
}

/// Exact Gibbs probabilities of every joint configuration, indexed as in
/// [`BathChain::config_index`].
pub fn exact_gibbs(target: &Target, k: usize, t: f64, sigma: f64, h: &[f64]) -> Result<Vec<f64>> {
    let atoms = Atoms::new(target)?;
    check_field(h, atoms.d)?;
    let n = atoms.len();
    let total = (0..k)
        .try_fold(1usize, |acc, _| acc.checked_mul(n))
        .filter(|&s| s <= MAX_GIBBS_STATES)
        .ok_or_else(|| Error::InvalidParameter("too many joint configurations to enumerate".to_string()))?;
    let (b, w) = (beta(t, sigma), coupling_weight(k));
    let mut sites = vec![0usize; k];
    let mut logits = Vec::with_capacity(total);
    for idx in 0..total {
        let mut r = idx;
        for s in sites.iter_mut() {
            *s = r % n;
            r /= n;
        }
        logits.push(-config_energy(&atoms, &sites, w, h, b));
    }
    let lse = logsumexp(&logits);
    Ok(logits.into_iter().map(|l| (l - lse).exp()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathRunStats {
    pub k: usize,
    pub t: f64,
    /// `⟨ȳ⟩` over the recorded sweeps.
    pub mean: Vec<f64>,
    /// Standard error of `⟨ȳ⟩`, inflated by the autocorrelation time.
    pub stderr: Vec<f64>,
    /// Covariance of `ȳ` across sweeps.
    pub covariance: Matrix,
    /// Fluctuation estimate of `∂⟨ȳ⟩/∂h`: `βK·Cov(ȳ)`.
    pub susceptibility: Matrix,
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of `ȳ` projected on its mean
    /// direction, in sweeps.
    pub autocorrelation_time: f64,
    pub sweeps: usize,
    pub burn_in: usize,
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`W ≥ 5τ`), capped at 1000 lags.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n.min(MAX_AUTOCORR_LAG) {
        let c = series[..n - lag]
            .iter()
            .zip(&series[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Metropolis run of `sweeps` sweeps; the first `burn_in` are discarded.
#[allow(clippy::too_many_arguments)]
pub fn bath_mc_run<R: Rng + ?Sized>(
    k: usize,
    t: f64,
    sigma: f64,
    h: &[f64],
    target: &Target,
    sweeps: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<BathRunStats> {
    if sweeps <= burn_in {
        return Err(Error::InvalidParameter("sweeps must exceed burn_in".to_string()));
    }
    let mut chain = BathChain::new(target, k, t, sigma, h, rng)?;
    for _ in 0..burn_in {
        chain.sweep(rng);
    }
    let d = target.dim();
    let n = sweeps - burn_in;
    let mut series = Vec::with_capacity(n * d);
    for _ in 0..n {
        chain.sweep(rng);
        series.extend_from_slice(&chain.magnetization());
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for m in series.chunks_exact(d) {
        mean.iter_mut().zip(m).for_each(|(a, v)| *a += v / nf);
    }
    let mut cov = Matrix::zeros(d);
    for m in series.chunks_exact(d) {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (m[i] - mean[i]) * (m[j] - mean[j]) / nf;
            }
        }
    }
    let mn = linalg::norm(&mean);
    let dir: Vec<f64> = if mn > 0.0 {
        mean.iter().map(|v| v / mn).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let projected: Vec<f64> = series.chunks_exact(d).map(|m| linalg::dot(m, &dir)).collect();
    let tau = integrated_autocorrelation(&projected);
    let stderr = (0..d).map(|i| (cov[(i, i)] * tau / nf).sqrt()).collect();
    let b = beta(t, sigma);
    Ok(BathRunStats {
        k,
        t,
        susceptibility: cov.scaled(b * k as f64),
        mean,
        stderr,
        covariance: cov,
        acceptance_rate: chain.acceptance_rate(),
        autocorrelation_time: tau,
        sweeps,
        burn_in,
    })
}

/// Stable root of `m = tanh((m + h)/(tσ²))`; the positive branch when
/// `h = 0` in the ordered phase.
pub fn curie_weiss_magnetization(t: f64, sigma: f64, h: f64) -> f64 {
    let temp = t * sigma * sigma;
    if h < 0.0 {
        return -curie_weiss_magnetization(t, sigma, -h);
    }
    let g = |m: f64| m - ((m + h) / temp).tanh();
    if h == 0.0 {
        if temp >= 1.0 {
            return 0.0;
        }
        return bisect(g, 1e-12, 1.0, 0.0).unwrap_or(0.0);
    }
    bisect(g, 0.0, 1.0, 0.0).unwrap_or(0.0)
}

/// Root of `m = tanh((m + h)/T)` on the branch continuously connected to
/// `m > 0` at `h = 0`, including its metastable part for small `h < 0`.
/// `None` past the spinodal.
pub fn curie_weiss_branch(t: f64, sigma: f64, h: f64) -> Option<f64> {
    let temp = t * sigma * sigma;
    if h >= 0.0 || temp >= 1.0 {
        return Some(curie_weiss_magnetization(t, sigma, h));
    }
    let g = |m: f64| m - ((m + h) / temp).tanh();
    let spinodal = temp * (1.0 - temp).sqrt().atanh() - h;
    if !(spinodal < 1.0) || g(spinodal) > 0.0 {
        return None;
    }
    bisect(g, spinodal, 1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    HighTemperature,
    LowTemperature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureStateVariance {
    /// `T ∂m/∂h` at `h = 0` by finite differences along the positive branch.
    pub value: f64,
    /// `1/(1 − 1/T)` above `T = 1`; `T(1 − m²)/m²` below.
    pub closed_form: f64,
    pub phase: Phase,
    pub magnetization: f64,
    /// Whether `value` and `closed_form` agree to 1e−6 (relative).
    pub agrees: bool,
}

pub fn pure_state_variance(t: f64, sigma: f64) -> Result<PureStateVariance> {
    let temp = t * sigma * sigma;
    if !(temp.is_finite() && temp > 0.0) {
        return Err(Error::InvalidState("tσ² must be positive".to_string()));
    }
    if (temp - 1.0).abs() < CRITICAL_BAND {
        return Err(Error::CriticalDivergence);
    }
    let m = curie_weiss_magnetization(t, sigma, 0.0);
    let up = curie_weiss_branch(t, sigma, FD_STEP).ok_or(Error::CriticalDivergence)?;
    // Just below T = 1 the metastable branch can end inside the step; a
    // one-sided second-order stencil is used there instead.
    let slope = match curie_weiss_branch(t, sigma, -FD_STEP) {
        Some(down) => (up - down) / (2.0 * FD_STEP),
        None => {
            let up2 = curie_weiss_branch(t, sigma, 2.0 * FD_STEP).ok_or(Error::CriticalDivergence)?;
            (-3.0 * m + 4.0 * up - up2) / (2.0 * FD_STEP)
        }
    };
    let value = temp * slope;
    let (phase, closed_form) = if temp > 1.0 {
        (Phase::HighTemperature, 1.0 / (1.0 - 1.0 / temp))
    } else {
        (Phase::LowTemperature, temp * (1.0 - m * m) / (m * m))
    };
    Ok(PureStateVariance {
        value,
        closed_form,
        phase,
        magnetization: m,
        agrees: (value - closed_form).abs() <= CLOSED_FORM_TOL * closed_form.abs().max(1.0),
    })
}

/// Mean-field pure state selected by a vanishing field along `x`, seeded
/// from `seed`. Falls back to the default seeds when the result is not
/// stable, keeping the stable point best aligned with `x`.
pub fn pure_state(t: f64, x: &[f64], seed: &[f64], target: &Target, sigma: f64) -> Result<FixedPoint> {
    let mean = target.mean();
    let dx: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let n = linalg::norm(&dx);
    let h: Vec<f64> = if n > 0.0 {
        dx.iter().map(|v| PURE_STATE_FIELD * v / n).collect()
    } else {
        vec![0.0; x.len()]
    };
    let first = criticality::solve_self_consistency(t, &h, seed, target, sigma);
    if let Ok(fp) = &first {
        if fp.stability == Stability::Stable {
            return first;
        }
    }
    let score = |fp: &FixedPoint| {
        let dm: Vec<f64> = fp.m.iter().zip(&mean).map(|(a, b)| a - b).collect();
        linalg::dot(&dm, &dx)
    };
    let mut best: Option<FixedPoint> = None;
    for s in criticality::default_seeds(target) {
        if let Ok(fp) = criticality::solve_self_consistency(t, &h, &s, target, sigma) {
            if fp.stability == Stability::Stable && best.as_ref().is_none_or(|b| score(&fp) > score(b)) {
                best = Some(fp);
            }
        }
    }
    match best {
        Some(fp) => Ok(fp),
        None => first,
    }
}

/// Brownian particle driven by bath fluctuations:
/// `x ← x + (⟨ȳ⟩ − x)Δt/t + (1/√H)·B·ξ·√(Δt/t)` with `B = (T χ_sc)^{1/2}`
/// the pure-state fluctuation amplitude, `χ_sc = (I − βC)^{−1}βC`.
pub fn bath_brownian_integrate<R: Rng + ?Sized>(
    x_init: &[f64],
    schedule: &Schedule,
    h_coupled: f64,
    target: &Target,
    sigma: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    bath_brownian_with_noise(x_init, schedule, h_coupled, target, sigma, |_, xi| fill_standard_normal(rng, xi))
}

/// As [`bath_brownian_integrate`], with `noise(step, ξ)` supplying the
/// standard-normal increments.
pub fn bath_brownian_with_noise(
    x_init: &[f64],
    schedule: &Schedule,
    h_coupled: f64,
    target: &Target,
    sigma: f64,
    mut noise: impl FnMut(usize, &mut [f64]),
) -> Result<Trajectory> {
    schedule.validate()?;
    Atoms::new(target)?;
    if !(h_coupled >= 1.0 && h_coupled.is_finite()) {
        return Err(Error::InvalidParameter("H must be at least 1".to_string()));
    }
    if x_init.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: x_init.len(),
        });
    }
    let d = target.dim();
    let times = schedule.times();
    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len() * d),
        dim: d,
        stream: None,
    };
    let mut x = x_init.to_vec();
    let mut m_prev = x.clone();
    let mean = target.mean();
    let mut xi = vec![0.0; d];
    let inv_sqrt_h = 1.0 / h_coupled.sqrt();
    traj.times.push(times[0]);
    traj.states.extend_from_slice(&x);
    for (k, w) in times.windows(2).enumerate() {
        let (t, t_next) = (w[0], w[1]);
        let ratio = (t - t_next) / t;
        let same_side: f64 = (0..d).map(|i| (m_prev[i] - mean[i]) * (x[i] - mean[i])).sum();
        let seed = if same_side < 0.0 { &x } else { &m_prev };
        let fp = pure_state(t, &x, seed, target, sigma)?;
        let b = pure_state_amplitude(&fp, target, sigma)?;
        noise(k, &mut xi);
        let kick = b.mul_vec(&xi);
        for i in 0..d {
            x[i] += (fp.m[i] - x[i]) * ratio + inv_sqrt_h * kick[i] * ratio.sqrt();
        }
        m_prev = fp.m;
        traj.times.push(t_next);
        traj.states.extend_from_slice(&x);
        if x.iter().any(|v| !v.is_finite()) || linalg::norm(&x) > DIVERGENCE_NORM {
            return Err(Error::NonFiniteState {
                step: k + 1,
                partial: alloc::boxed::Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// `(T χ_sc)^{1/2}` at a pure state, with negative eigenvalues clipped.
pub fn pure_state_amplitude(fp: &FixedPoint, target: &Target, sigma: f64) -> Result<Matrix> {
    let chi = criticality::fixed_point_susceptibility(fp, target, sigma)?;
    let temp = fp.t * sigma * sigma;
    let sym = chi.add(&transpose(&chi)).scaled(0.5 * temp);
    Ok(sym.sqrt_psd())
}

fn transpose(a: &Matrix) -> Matrix {
    let d = a.dim();
    let mut t = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            t[(i, j)] = a[(j, i)];
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub k: usize,
    pub t: f64,
    pub mean_magnetization: f64,
    pub stderr: f64,
    pub mean_field_value: f64,
    pub abs_error: f64,
}

/// Monte Carlo settings shared by every `(K, t)` cell of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    pub replicas: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub master_seed: u64,
}

/// Stream index of replica `r` in cell `(ki, ti)`; distinct for any study
/// with fewer than 2^20 replicas and 2^20 times.
pub fn study_stream_index(ki: usize, ti: usize, r: usize) -> u64 {
    ((ki as u64) << 40) | ((ti as u64) << 20) | r as u64
}

/// Projection direction for magnetizations: `ĥ`, or the first axis at
/// zero field.
pub fn study_direction(h: &[f64]) -> Vec<f64> {
    let n = linalg::norm(h);
    if n > 0.0 {
        h.iter().map(|v| v / n).collect()
    } else {
        let mut e = vec![0.0; h.len()];
        e[0] = 1.0;
        e
    }
}

/// Mean-field value of `ȳ·ĥ` at `(t, h)`, seeded along `ĥ`.
pub fn mean_field_projection(t: f64, h: &[f64], target: &Target, sigma: f64) -> Result<f64> {
    let dir = study_direction(h);
    let mean = target.mean();
    let scale = 0.5 * target.support_diameter();
    let seed: Vec<f64> = mean.iter().zip(&dir).map(|(m, u)| m + scale * u).collect();
    let fp = criticality::solve_self_consistency(t, h, &seed, target, sigma)?;
    Ok(linalg::dot(&fp.m, &dir))
}

/// One replica's `⟨ȳ⟩·ĥ`.
pub fn study_replica(k: usize, t: f64, h: &[f64], target: &Target, sigma: f64, settings: &StudySettings, index: u64) -> Result<f64> {
    let mut rng = stream(settings.master_seed, index);
    let stats = bath_mc_run(k, t, sigma, h, target, settings.sweeps, settings.burn_in, &mut rng)?;
    Ok(linalg::dot(&stats.mean, &study_direction(h)))
}

pub fn convergence_row(k: usize, t: f64, replica_values: &[f64], mean_field_value: f64) -> ConvergenceRow {
    let (mean, stderr) = mean_stderr(replica_values);
    ConvergenceRow {
        k,
        t,
        mean_magnetization: mean,
        stderr,
        mean_field_value,
        abs_error: (mean - mean_field_value).abs(),
    }
}

/// `|⟨ȳ⟩_K − m_∞|` over every `(K, t)` pair, each cell averaged over
/// independent replicas.
pub fn mean_field_convergence_study(
    k_list: &[usize],
    t_grid: &[f64],
    target: &Target,
    sigma: f64,
    h: &[f64],
    settings: &StudySettings,
) -> Result<Vec<ConvergenceRow>> {
    if k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("K list must be ascending".to_string()));
    }
    if settings.replicas < 8 {
        return Err(Error::InvalidParameter("at least 8 replicas are required".to_string()));
    }
    let mut rows = Vec::with_capacity(k_list.len() * t_grid.len());
    for (ki, &k) in k_list.iter().enumerate() {
        for (ti, &t) in t_grid.iter().enumerate() {
            let mf = mean_field_projection(t, h, target, sigma)?;
            let values = (0..settings.replicas)
                .map(|r| study_replica(k, t, h, target, sigma, settings, study_stream_index(ki, ti, r)))
                .collect::<Result<Vec<_>>>()?;
            rows.push(convergence_row(k, t, &values, mf));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tanh_root(temp: f64) -> f64 {
        bisect(|m| m - (m / temp).tanh(), 1e-3, 1.0, 1e-15).unwrap()
    }

    #[test]
    fn two_site_energy() {
        let t = Target::two_deltas();
        // Atom 1 is +1.
        let c = BathConfig::new(vec![1, 1], vec![0.0], 3.0).unwrap();
        let e = bath_energy(&c, &t).unwrap();
        assert!((e - (-1.5 + 2.0 * 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn aligned_configurations_have_lowest_energy() {
        let t = Target::two_deltas();
        let mut energies = Vec::new();
        for idx in 0..16usize {
            let sites: Vec<usize> = (0..4).map(|b| (idx >> b) & 1).collect();
            let c = BathConfig::new(sites, vec![0.0], 1.0).unwrap();
            energies.push((idx, bath_energy(&c, &t).unwrap()));
        }
        let aligned = energies[15].1;
        assert_eq!(aligned, energies[0].1);
        for (idx, e) in &energies {
            if *idx != 0 && *idx != 15 {
                assert!(aligned < *e);
            }
        }
    }

    #[test]
    fn energy_is_linear_in_aligned_field() {
        let t = Target::two_deltas();
        let e = |h: f64| bath_energy(&BathConfig::new(vec![1; 5], vec![h], 2.0).unwrap(), &t).unwrap();
        let (e0, e1, e2) = (e(0.0), e(0.5), e(1.0));
        assert!(e1 < e0);
        assert!(((e2 - e1) - (e1 - e0)).abs() < 1e-12);
    }

    #[test]
    fn energy_is_permutation_invariant() {
        let t = Target::four_deltas();
        let a = BathConfig::new(vec![0, 2, 3, 1, 2], vec![0.2, -0.1], 1.7).unwrap();
        let b = BathConfig::new(vec![2, 1, 0, 2, 3], vec![0.2, -0.1], 1.7).unwrap();
        assert_eq!(bath_energy(&a, &t).unwrap(), bath_energy(&b, &t).unwrap());
    }

    #[test]
    fn non_constant_norm_is_rejected() {
        let t = Target::discrete(vec![vec![0.0], vec![2.0]]).unwrap();
        assert!(matches!(
            bath_energy(&BathConfig::new(vec![0, 1], vec![0.0], 1.0).unwrap(), &t),
            Err(Error::NonConstantNorm)
        ));
    }

    #[test]
    fn chain_energy_tracks_incremental_updates() {
        let t = Target::four_deltas();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut chain = BathChain::new(&t, 6, 0.7, 1.0, &[0.1, 0.0], &mut rng).unwrap();
        for _ in 0..50 {
            chain.sweep(&mut rng);
            let c = BathConfig {
                sites: chain.sites().to_vec(),
                w: coupling_weight(6),
                h: vec![0.1, 0.0],
                beta: 1.0 / 0.7,
            };
            assert!((chain.energy() - bath_energy(&c, &t).unwrap()).abs() < 1e-12);
        }
        let r = chain.acceptance_rate();
        assert!(r > 0.0 && r <= 1.0);
    }

    #[test]
    fn small_chain_matches_exact_gibbs() {
        let t = Target::two_deltas();
        let (k, temp, h) = (4, 1.5, [0.1]);
        let exact = exact_gibbs(&t, k, temp, 1.0, &h).unwrap();
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut chain = BathChain::new(&t, k, temp, 1.0, &h, &mut rng).unwrap();
        let mut hist = vec![0.0; exact.len()];
        let n = 200_000;
        for _ in 0..n {
            chain.sweep(&mut rng);
            hist[chain.config_index()] += 1.0 / n as f64;
        }
        let tv: f64 = 0.5 * hist.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn curie_weiss_roots() {
        assert_eq!(curie_weiss_magnetization(2.0, 1.0, 0.0), 0.0);
        let m = curie_weiss_magnetization(0.5, 1.0, 0.0);
        assert!((m - tanh_root(0.5)).abs() < 1e-14);
        assert!((m - 0.957_504).abs() < 1e-6);
        let a = curie_weiss_magnetization(0.5, 1.0, 1e-9);
        let b = curie_weiss_magnetization(0.5, 1.0, -1e-9);
        assert!((a + b).abs() < 1e-15 && a > 0.9);
        // σ only enters through tσ².
        assert_eq!(curie_weiss_magnetization(2.0, 0.5, 0.0), m);
        let meta = curie_weiss_branch(0.5, 1.0, -0.01).unwrap();
        assert!(meta > 0.9 && meta < m);
        assert!(curie_weiss_branch(0.5, 1.0, -0.5).is_none());
    }

    #[test]
    fn pure_state_variance_limits() {
        let v = pure_state_variance(2.0, 1.0).unwrap();
        assert_eq!(v.phase, Phase::HighTemperature);
        assert!((v.value - 2.0).abs() < 1e-6);
        assert!(v.agrees);
        for temp in [1.0 + 1e-4, 1.0 - 1e-4] {
            assert!(pure_state_variance(temp, 1.0).unwrap().value > 1e3);
        }
        assert!(matches!(pure_state_variance(1.0, 1.0), Err(Error::CriticalDivergence)));
        assert!(pure_state_variance(0.05, 1.0).unwrap().value < 1e-10);
        // Exact low-temperature response T(1 − m²)/(T − 1 + m²).
        let v = pure_state_variance(0.5, 1.0).unwrap();
        let m = v.magnetization;
        let exact = 0.5 * (1.0 - m * m) / (0.5 - 1.0 + m * m);
        assert!((v.value - exact).abs() < 1e-6);
        assert_eq!(v.phase, Phase::LowTemperature);
        assert!(!v.agrees);
    }

    #[test]
    fn disordered_phase_has_no_magnetization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = bath_mc_run(512, 2.0, 1.0, &[0.0], &Target::two_deltas(), 2200, 200, &mut rng).unwrap();
        assert!(s.mean[0].abs() < 0.05);
        // βK·Var(ȳ) approaches the resummed response 1/(T − 1) = 1.
        assert!((s.susceptibility[(0, 0)] - 1.0).abs() < 0.25);
    }

    #[test]
    fn ordered_phase_follows_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = bath_mc_run(512, 0.5, 1.0, &[0.01], &Target::two_deltas(), 1200, 200, &mut rng).unwrap();
        assert!((s.mean[0] - 0.9575).abs() < 0.02);
        assert!(s.autocorrelation_time >= 1.0);
    }

    #[test]
    fn autocorrelation_of_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho: f64 = 0.8;
        let mut v = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                v = rho * v + e;
                v
            })
            .collect();
        let tau = integrated_autocorrelation(&series);
        let exact = (1.0 + rho) / (1.0 - rho);
        assert!((tau - exact).abs() < 0.1 * exact, "{tau}");
    }

    #[test]
    fn brownian_drift_is_mean_reverting() {
        let t = Target::two_deltas();
        let s = Schedule::log(0.5, 0.45, 2).unwrap();
        let tr = bath_brownian_with_noise(&[1.5], &s, 64.0, &t, 1.0, |_, xi| xi.fill(0.0)).unwrap();
        assert!(tr.state(1)[0] < 1.5);
        assert!(tr.state(1)[0] > 0.9);
    }

    #[test]
    fn brownian_noise_scales_with_coupled_sites() {
        let t = Target::two_deltas();
        let s = Schedule::log(2.0, 1.9, 2).unwrap();
        let step = |h: f64| {
            let a = bath_brownian_with_noise(&[0.0], &s, h, &t, 1.0, |_, xi| xi.fill(1.0)).unwrap();
            let b = bath_brownian_with_noise(&[0.0], &s, h, &t, 1.0, |_, xi| xi.fill(0.0)).unwrap();
            a.state(1)[0] - b.state(1)[0]
        };
        let r = step(32.0) / step(64.0);
        assert!((r * r - 2.0).abs() < 1e-9);
    }

    #[test]
    fn brownian_particle_lands_on_support() {
        let t = Target::two_deltas();
        let s = Schedule::log(4.0, 1e-3, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 400;
        let mut plus = 0;
        for _ in 0..n {
            let x0 = [rng.sample::<f64, _>(rand_distr::StandardNormal) * 5f64.sqrt()];
            let tr = bath_brownian_integrate(&x0, &s, 64.0, &t, 1.0, &mut rng).unwrap();
            let x = tr.terminal()[0];
            assert!((x.abs() - 1.0).abs() < 0.05, "{x}");
            if x > 0.0 {
                plus += 1;
            }
        }
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.1);
    }

    #[test]
    fn convergence_study_rows() {
        let t = Target::two_deltas();
        let settings = StudySettings {
            replicas: 8,
            sweeps: 400,
            burn_in: 100,
            master_seed: 7,
        };
        let rows = mean_field_convergence_study(&[16, 64], &[0.5, 2.0], &t, 1.0, &[0.01], &settings).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            if r.t == 2.0 {
                assert!(r.mean_field_value.abs() < 0.02);
            } else {
                assert!((r.mean_field_value - 0.958).abs() < 1e-2);
            }
        }
        assert!(mean_field_convergence_study(&[64, 16], &[0.5], &t, 1.0, &[0.01], &settings).is_err());
    }
}
