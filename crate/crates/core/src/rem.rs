//! Random-energy-model view of memorization on a finite training set.
//!
//! A dataset of `N = 2^M` points drawn uniformly on the sphere of radius
//! `r = ν√(M/(2d))` turns `Z_N(x, β) = (1/N) Σ_j exp(−β E_j)` with
//! `E_j = ½‖y_j‖² − x·y_j` into a random energy model. The participation
//! ratio `Y = Σ_j w_j²` of the normalized Boltzmann weights measures how
//! many points carry the measure.
//!
//! For points uniform on the sphere, `x·y_j` has variance `‖x‖²r²/d`, so
//! the REM coupling that maps this dataset onto the standard model with
//! energies of variance `M J²/2` is `J = ν_eff‖x‖` with
//! `ν_eff = r√(2/(dM))`. Theory curves and the condensation time of a
//! [`CondensationReport`] use `ν_eff`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::linalg;
use crate::numeric::{log_grid, logsumexp, mean_stderr};
use crate::rng::{fill_standard_normal, stream};
use crate::{Error, Result};

pub const MIN_M: u32 = 8;
pub const MAX_M: u32 = 24;
pub const MIN_REPLICAS: usize = 8;
/// Median participation ratio above which the measure counts as collapsed
/// onto a single point.
pub const COLLAPSE_LEVEL: f64 = 0.99;

/// Critical inverse temperature `2√(ln 2)` of the standard REM.
pub fn beta_c() -> f64 {
    2.0 * core::f64::consts::LN_2.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemParams {
    pub m: u32,
    pub d: usize,
    pub nu: f64,
}

impl RemParams {
    pub fn new(m: u32, d: usize, nu: f64) -> Result<Self> {
        if m > MAX_M {
            return Err(Error::SizeOverflow { m });
        }
        if m < MIN_M {
            return Err(Error::InvalidParameter("M must be at least 8".to_string()));
        }
        if d < 2 {
            return Err(Error::InvalidParameter("REM dimension must be at least 2".to_string()));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter("nu must be positive".to_string()));
        }
        Ok(Self { m, d, nu })
    }

    pub fn n(&self) -> usize {
        1usize << self.m
    }

    pub fn radius(&self) -> f64 {
        self.nu * (self.m as f64 / (2.0 * self.d as f64)).sqrt()
    }

    /// Coupling per unit field: `r√(2/(dM))`.
    pub fn effective_nu(&self) -> f64 {
        self.radius() * (2.0 / (self.d as f64 * self.m as f64)).sqrt()
    }

    /// `ν_eff·β·‖x‖`.
    pub fn beta_tilde(&self, beta: f64, x_norm: f64) -> f64 {
        self.effective_nu() * beta * x_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemDataset {
    pub params: RemParams,
    points: Vec<f64>,
}

/// `N` points uniform on the radius-`r` sphere.
pub fn build_rem_dataset<R: Rng + ?Sized>(m: u32, d: usize, nu: f64, rng: &mut R) -> Result<RemDataset> {
    let params = RemParams::new(m, d, nu)?;
    let r = params.radius();
    let mut points = vec![0.0; params.n() * d];
    for y in points.chunks_exact_mut(d) {
        loop {
            fill_standard_normal(rng, y);
            let n = linalg::norm(y);
            if n > 0.0 {
                y.iter_mut().for_each(|v| *v *= r / n);
                break;
            }
        }
    }
    Ok(RemDataset { params, points })
}

impl RemDataset {
    /// Wraps explicit points; there must be exactly `2^M` of them, all of
    /// norm `r` to within 1e−12.
    pub fn from_points(params: RemParams, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() != params.n() {
            return Err(Error::InvalidParameter("dataset must hold exactly 2^M points".to_string()));
        }
        let r = params.radius();
        let mut flat = Vec::with_capacity(params.n() * params.d);
        for p in &points {
            if p.len() != params.d {
                return Err(Error::DimensionMismatch {
                    expected: params.d,
                    found: p.len(),
                });
            }
            if (linalg::norm(p) - r).abs() > 1e-12 {
                return Err(Error::InvalidParameter("dataset point is off the sphere".to_string()));
            }
            flat.extend_from_slice(p);
        }
        Ok(Self { params, points: flat })
    }

    pub fn len(&self) -> usize {
        self.params.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.params.d;
        &self.points[j * d..(j + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.params.d)
    }

    /// `E_j = ½‖y_j‖² − x·y_j`.
    pub fn energies(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                found: x.len(),
            });
        }
        Ok(self
            .points()
            .map(|y| 0.5 * linalg::norm_sq(y) - linalg::dot(x, y))
            .collect())
    }
}

/// `log((1/N) Σ_j exp(−βE_j))`.
pub fn log_partition_from_energies(energies: &[f64], beta: f64) -> f64 {
    let logits: Vec<f64> = energies.iter().map(|e| -beta * e).collect();
    logsumexp(&logits) - (energies.len() as f64).ln()
}

/// `Σ_j w_j²` with `w ∝ exp(−βE_j)`, computed in the log domain and kept
/// inside `[1/N, 1]`.
pub fn participation_from_energies(energies: &[f64], beta: f64) -> f64 {
    let n = energies.len() as f64;
    let mut logits: Vec<f64> = energies.iter().map(|e| -beta * e).collect();
    let lse = logsumexp(&logits);
    logits.iter_mut().for_each(|l| *l = 2.0 * (*l - lse));
    logsumexp(&logits).exp().clamp(1.0 / n, 1.0)
}

pub fn quenched_log_partition(dataset: &RemDataset, x: &[f64], beta: f64) -> Result<f64> {
    Ok(log_partition_from_energies(&dataset.energies(x)?, beta))
}

pub fn participation_ratio(dataset: &RemDataset, x: &[f64], t: f64, sigma: f64) -> Result<f64> {
    crate::thermo::ThermoState::new(x.to_vec(), t, sigma)?;
    Ok(participation_from_energies(&dataset.energies(x)?, crate::thermo::beta(t, sigma)))
}

/// `t_cond = ν‖x‖ / (2σ²√(ln 2))`.
pub fn condensation_time(x: &[f64], nu: f64, sigma: f64) -> Result<f64> {
    condensation_time_for_norm(linalg::norm(x), nu, sigma)
}

fn condensation_time_for_norm(x_norm: f64, nu: f64, sigma: f64) -> Result<f64> {
    if !(x_norm > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(nu * x_norm / (2.0 * sigma * sigma * core::f64::consts::LN_2.sqrt()))
}

/// Large-`N` disorder average: 0 for `β̃ ≤ β_c`, `1 − β_c/β̃` above.
pub fn expected_participation_ratio(beta_tilde: f64) -> f64 {
    let bc = beta_c();
    if beta_tilde <= bc {
        0.0
    } else {
        1.0 - bc / beta_tilde
    }
}

/// REM energies `E_j` of one dataset replica seen from a field of norm
/// `x_norm`, drawn without materializing the points: for `y` uniform on
/// the radius-`r` sphere, `x·y/(‖x‖r)` is distributed as `g/√(g² + χ²_{d−1})`.
pub fn sample_energies<R: Rng + ?Sized>(params: &RemParams, x_norm: f64, rng: &mut R) -> Vec<f64> {
    let r = params.radius();
    let chi = ChiSquared::new((params.d - 1) as f64).expect("d ≥ 2");
    (0..params.n())
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            let c: f64 = chi.sample(rng);
            let cos = g / (g * g + c).sqrt();
            0.5 * r * r - x_norm * r * cos
        })
        .collect()
}

/// `Y(t)` along `t_grid` for one disorder realization.
pub fn replica_curve<R: Rng + ?Sized>(params: &RemParams, x_norm: f64, sigma: f64, t_grid: &[f64], rng: &mut R) -> Vec<f64> {
    let energies = sample_energies(params, x_norm, rng);
    t_grid
        .iter()
        .map(|&t| participation_from_energies(&energies, crate::thermo::beta(t, sigma)))
        .collect()
}

/// `t_cond · 2^{k/4}` for `k = −12..=12`, descending.
pub fn default_t_grid(t_cond: f64) -> Vec<f64> {
    log_grid(t_cond * 8.0, t_cond / 8.0, 25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensationReport {
    pub params: RemParams,
    pub x_norm: f64,
    pub sigma: f64,
    pub replicas: usize,
    pub times: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_stderr: Vec<f64>,
    pub y_median: Vec<f64>,
    pub y_theory: Vec<f64>,
    /// `1/⟨Y⟩`.
    pub n_eff: Vec<f64>,
    /// Condensation time for the effective coupling `ν_eff`.
    pub t_cond: f64,
    /// Largest grid time at which the disorder-median `Y` exceeds 0.99.
    pub t_collapse: Option<f64>,
}

/// Disorder statistics from per-replica curves (one row per replica).
pub fn assemble_report(
    params: &RemParams,
    x_norm: f64,
    sigma: f64,
    t_grid: &[f64],
    curves: &[Vec<f64>],
) -> Result<CondensationReport> {
    if curves.len() < MIN_REPLICAS {
        return Err(Error::InvalidParameter("at least 8 replicas are required".to_string()));
    }
    let t_cond = condensation_time_for_norm(x_norm, params.effective_nu(), sigma)?;
    let mut report = CondensationReport {
        params: *params,
        x_norm,
        sigma,
        replicas: curves.len(),
        times: t_grid.to_vec(),
        beta_tilde: Vec::with_capacity(t_grid.len()),
        y_mean: Vec::with_capacity(t_grid.len()),
        y_stderr: Vec::with_capacity(t_grid.len()),
        y_median: Vec::with_capacity(t_grid.len()),
        y_theory: Vec::with_capacity(t_grid.len()),
        n_eff: Vec::with_capacity(t_grid.len()),
        t_cond,
        t_collapse: None,
    };
    let mut column = Vec::with_capacity(curves.len());
    for (k, &t) in t_grid.iter().enumerate() {
        column.clear();
        column.extend(curves.iter().map(|c| c[k]));
        let (mean, se) = mean_stderr(&column);
        column.sort_by(|a, b| a.total_cmp(b));
        let n = column.len();
        let median = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
        let bt = params.beta_tilde(crate::thermo::beta(t, sigma), x_norm);
        report.beta_tilde.push(bt);
        report.y_mean.push(mean);
        report.y_stderr.push(se);
        report.y_median.push(median);
        report.y_theory.push(expected_participation_ratio(bt));
        report.n_eff.push(1.0 / mean);
        if median > COLLAPSE_LEVEL && report.t_collapse.is_none_or(|tc| t > tc) {
            report.t_collapse = Some(t);
        }
    }
    Ok(report)
}

/// Disorder-averaged participation ratio over `replicas` independent
/// datasets; replica `i` draws from stream `(master_seed, i)`.
pub fn condensation_scan(
    params: &RemParams,
    x: &[f64],
    sigma: f64,
    t_grid: &[f64],
    replicas: usize,
    master_seed: u64,
) -> Result<CondensationReport> {
    if x.len() != params.d {
        return Err(Error::DimensionMismatch {
            expected: params.d,
            found: x.len(),
        });
    }
    if replicas < MIN_REPLICAS {
        return Err(Error::InvalidParameter("at least 8 replicas are required".to_string()));
    }
    let x_norm = linalg::norm(x);
    if !(x_norm > 0.0) {
        return Err(Error::ZeroField);
    }
    let curves: Vec<Vec<f64>> = (0..replicas)
        .map(|i| replica_curve(params, x_norm, sigma, t_grid, &mut stream(master_seed, i as u64)))
        .collect();
    assemble_report(params, x_norm, sigma, t_grid, &curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dataset_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = build_rem_dataset(10, 32, 1.0, &mut rng).unwrap();
        assert_eq!(ds.len(), 1024);
        let r = (10.0f64 / 64.0).sqrt();
        assert!(ds.points().all(|y| (linalg::norm(y) - r).abs() < 1e-12));
        assert!(matches!(build_rem_dataset(25, 4, 1.0, &mut rng), Err(Error::SizeOverflow { m: 25 })));
        assert!(build_rem_dataset(8, 4, 0.0, &mut rng).is_err());
        assert!(build_rem_dataset(8, 1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dataset_is_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = build_rem_dataset(8, 6, 1.0, &mut rng).unwrap();
        let n = ds.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += linalg::dot(ds.point(i), ds.point(j));
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let r2 = ds.params.radius().powi(2);
        assert!((sum / pairs).abs() < 4.0 * r2 / pairs.sqrt());
    }

    #[test]
    fn quenched_partition_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = build_rem_dataset(8, 16, 1.0, &mut rng).unwrap();
        let x = vec![0.3; 16];
        assert_eq!(quenched_log_partition(&ds, &x, 0.0).unwrap(), 0.0);

        let params = ds.params;
        let y = ds.point(0).to_vec();
        let dup = RemDataset::from_points(params, vec![y.clone(); params.n()]).unwrap();
        let b = 3.0;
        let expected = -b * (0.5 * params.radius().powi(2) - linalg::dot(&x, &y));
        assert!((quenched_log_partition(&dup, &x, b).unwrap() - expected).abs() < 1e-12);

        let e = ds.energies(&x).unwrap();
        let e_min = e.iter().copied().fold(f64::INFINITY, f64::min);
        let b = 1e4;
        let lz = quenched_log_partition(&ds, &x, b).unwrap();
        // Unique ground state: −βE_min − log N.
        assert!((lz / b + e_min).abs() < 1e-3);
    }

    #[test]
    fn participation_limits() {
        let e = [0.3, -0.1, 0.7, 0.2];
        assert!((participation_from_energies(&e, 0.0) - 0.25).abs() < 1e-15);
        assert!((participation_from_energies(&e, 1e5) - 1.0).abs() < 1e-12);
        let tie = [0.3, -0.1, -0.1, 0.2];
        assert!((participation_from_energies(&tie, 1e5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn condensation_time_closed_form() {
        let t1 = condensation_time(&[1.0, 0.0], 1.0, 1.0).unwrap();
        assert!((t1 - 0.600_561).abs() < 1e-6);
        let t2 = condensation_time(&[0.0, 1.0], 2.0, 1.0).unwrap();
        assert!((t2 - 1.201_122).abs() < 1e-6);
        let t3 = condensation_time(&[1.0, 0.0], 1.0, 2.0).unwrap();
        assert!((t3 - t1 / 4.0).abs() < 1e-15);
        assert!(matches!(condensation_time(&[0.0, 0.0], 1.0, 1.0), Err(Error::ZeroField)));
    }

    #[test]
    fn theory_curve() {
        let bc = beta_c();
        assert_eq!(expected_participation_ratio(bc), 0.0);
        assert!((expected_participation_ratio(2.0 * bc) - 0.5).abs() < 1e-15);
        assert_eq!(expected_participation_ratio(0.5 * bc), 0.0);
    }

    #[test]
    fn effective_coupling() {
        let p = RemParams::new(16, 128, 1.0).unwrap();
        assert!((p.effective_nu() - 1.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn projection_sampler_matches_explicit_dataset() {
        // Compare the first two moments of x·y against an explicit dataset.
        let params = RemParams::new(12, 8, 1.0).unwrap();
        let x = [0.6, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e_fast = sample_energies(&params, 1.0, &mut rng);
        let ds = build_rem_dataset(12, 8, 1.0, &mut rng).unwrap();
        let e_slow = ds.energies(&x).unwrap();
        let stats = |e: &[f64]| {
            let n = e.len() as f64;
            let m = e.iter().sum::<f64>() / n;
            (m, e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
        };
        let (m1, v1) = stats(&e_fast);
        let (m2, v2) = stats(&e_slow);
        let var = params.radius().powi(2) / 8.0;
        assert!((v1 - var).abs() < 0.05 * var);
        assert!((v2 - var).abs() < 0.05 * var);
        assert!((m1 - m2).abs() < 0.05 * var.sqrt());
    }

    #[test]
    fn scan_shape_and_monotonicity() {
        let params = RemParams::new(10, 64, 1.0).unwrap();
        let t_cond = condensation_time(&[1.0], params.effective_nu(), 1.0).unwrap();
        let grid = default_t_grid(t_cond);
        let rep = condensation_scan(&params, &[1.0; 64].map(|v: f64| v / 8.0), 1.0, &grid, 8, 5).unwrap();
        assert!((rep.t_cond - t_cond).abs() < 1e-15);
        let n = params.n() as f64;
        for k in 0..grid.len() {
            assert!(rep.y_mean[k] >= 1.0 / n && rep.y_mean[k] <= 1.0);
            assert!(rep.n_eff[k] >= 1.0 && rep.n_eff[k] <= n);
        }
        assert!(rep.y_mean.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}
