//! Self-consistent order parameters, branch diagrams, the critical time and
//! mean-field exponent fits.
//!
//! A fixed point solves `m = ⟨y⟩(m + h, t)`, i.e. `m = −∇F(m + h, t)`. Its
//! stability is read off the leading eigenvalue `λ` of `β(t)C(m + h)`:
//! stable below 1, unstable above, marginal within `STABILITY_BAND`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{self, Matrix};
use crate::numeric::{bisect, linear_fit, log_grid};
use crate::targets::Target;
use crate::thermo::{self, beta};
use crate::{Error, Result};

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;
pub const STABILITY_BAND: f64 = 1e-6;
pub const DISTINCT_TOL: f64 = 1e-6;
/// Branch continuation tolerance as a fraction of the support diameter.
pub const JUMP_FRACTION: f64 = 0.05;
pub const MIN_R_SQUARED: f64 = 0.99;

const DAMPING: f64 = 0.5;
const NEWTON_SWITCH: f64 = 1e-3;
const PIVOT_TOL: f64 = 1e-12;
const TC_TOL: f64 = 1e-10;
const TC_SCAN_POINTS: usize = 240;
const FIT_POINTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn classify(leading_eigenvalue: f64) -> Self {
        if (leading_eigenvalue - 1.0).abs() <= STABILITY_BAND {
            Self::Marginal
        } else if leading_eigenvalue < 1.0 {
            Self::Stable
        } else {
            Self::Unstable
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub m: Vec<f64>,
    pub t: f64,
    pub h: Vec<f64>,
    pub stability: Stability,
    /// Largest eigenvalue of `β(t)C(m + h)`.
    pub leading_eigenvalue: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn shifted(m: &[f64], h: &[f64]) -> Vec<f64> {
    m.iter().zip(h).map(|(a, b)| a + b).collect()
}

/// `⟨y⟩(m + h) − m` and, when asked, `βC(m + h)`.
fn residual_at(m: &[f64], h: &[f64], b: f64, target: &Target, with_cov: bool) -> Result<(Vec<f64>, Option<Matrix>)> {
    let mo = thermo::moments(&shifted(m, h), b, target, with_cov)?;
    let r = mo.mean.iter().zip(m).map(|(a, b)| a - b).collect();
    Ok((r, mo.cov.map(|c| c.scaled(b))))
}

fn newton_step(m: &[f64], r: &[f64], bc: &Matrix) -> Option<Vec<f64>> {
    let j = Matrix::identity(m.len()).sub(bc);
    let delta = j.solve_vec(r, PIVOT_TOL)?;
    Some(m.iter().zip(&delta).map(|(a, d)| a + d).collect())
}

fn validate_inputs(t: f64, sigma: f64, h: &[f64], m0: &[f64], target: &Target) -> Result<()> {
    thermo::ThermoState::new(m0.to_vec(), t, sigma)?;
    for v in [h, m0] {
        if v.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: v.len(),
            });
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("h has non-finite entries".to_string()));
    }
    Ok(())
}

fn finish(m: Vec<f64>, t: f64, h: &[f64], b: f64, target: &Target, iterations: usize) -> Result<FixedPoint> {
    let (r, bc) = residual_at(&m, h, b, target, true)?;
    let (lambda, _) = bc.expect("covariance requested").leading_eigen();
    Ok(FixedPoint {
        residual: linalg::norm(&r),
        stability: Stability::classify(lambda),
        leading_eigenvalue: lambda,
        m,
        t,
        h: h.to_vec(),
        iterations,
    })
}

/// Damped iteration `m ← m + α(⟨y⟩ − m)` with `α = ½`, switching to Newton
/// on `(I − βC)δ = ⟨y⟩ − m` once the residual drops below 1e−3.
pub fn solve_self_consistency(t: f64, h: &[f64], m0: &[f64], target: &Target, sigma: f64) -> Result<FixedPoint> {
    validate_inputs(t, sigma, h, m0, target)?;
    let b = beta(t, sigma);
    let mut m = m0.to_vec();
    let mut best = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        let (r, _) = residual_at(&m, h, b, target, false)?;
        let rn = linalg::norm(&r);
        best = best.min(rn);
        if rn < RESIDUAL_TOL {
            return finish(m, t, h, b, target, it);
        }
        if !rn.is_finite() {
            break;
        }
        if rn < NEWTON_SWITCH {
            let (_, bc) = residual_at(&m, h, b, target, true)?;
            if let Some(next) = newton_step(&m, &r, &bc.expect("covariance requested")) {
                let (rn_next, _) = residual_at(&next, h, b, target, false)?;
                if linalg::norm(&rn_next) < rn {
                    m = next;
                    continue;
                }
            }
        }
        m.iter_mut().zip(&r).for_each(|(a, d)| *a += DAMPING * d);
    }
    Err(Error::NoConvergence {
        residual: best,
        iterations: MAX_ITERATIONS,
    })
}

/// Pure Newton from `m0`; follows whichever fixed point is nearest,
/// including unstable ones.
pub fn newton_fixed_point(t: f64, h: &[f64], m0: &[f64], target: &Target, sigma: f64) -> Result<FixedPoint> {
    validate_inputs(t, sigma, h, m0, target)?;
    let b = beta(t, sigma);
    let mut m = m0.to_vec();
    let mut rn = f64::INFINITY;
    for it in 0..100 {
        let (r, bc) = residual_at(&m, h, b, target, true)?;
        rn = linalg::norm(&r);
        if rn < RESIDUAL_TOL {
            return finish(m, t, h, b, target, it);
        }
        match newton_step(&m, &r, &bc.expect("covariance requested")) {
            Some(next) if next.iter().all(|v| v.is_finite()) => m = next,
            _ => break,
        }
    }
    Err(Error::NoConvergence {
        residual: rn,
        iterations: 100,
    })
}

/// Target mean, `mean ± 0.1(atom − mean)` for every atom, and the atoms.
/// For the hypersphere the atoms are `±r·e_i`.
pub fn default_seeds(target: &Target) -> Vec<Vec<f64>> {
    let mean = target.mean();
    let d = target.dim();
    let atoms: Vec<Vec<f64>> = match target.sphere_radius() {
        Some(r) => (0..2 * d)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k / 2] = if k % 2 == 0 { r } else { -r };
                e
            })
            .collect(),
        None => target.enumerate_support().map(|s| s.into_iter().map(|a| a.point).collect()).unwrap_or_default(),
    };
    let mut seeds = vec![mean.clone()];
    for a in &atoms {
        for s in [0.1, -0.1] {
            seeds.push(mean.iter().zip(a).map(|(m, y)| m + s * (y - m)).collect());
        }
    }
    seeds.extend(atoms);
    seeds
}

/// Distinct fixed points at one `t` (zero field) reached from `seeds`.
/// Seeds that fail to converge are dropped; if every seed fails the last
/// error is returned.
pub fn fixed_points_at(t: f64, target: &Target, sigma: f64, seeds: &[Vec<f64>]) -> Result<Vec<FixedPoint>> {
    let h = vec![0.0; target.dim()];
    let mut found: Vec<FixedPoint> = Vec::new();
    let mut last_err = None;
    for seed in seeds {
        match solve_self_consistency(t, &h, seed, target, sigma) {
            Ok(fp) => {
                if !found.iter().any(|f| linalg::dist(&f.m, &fp.m) < DISTINCT_TOL) {
                    found.push(fp);
                }
            }
            Err(e @ Error::NoConvergence { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    if found.is_empty() {
        return Err(last_err.unwrap_or(Error::InvalidParameter("no seeds given".to_string())));
    }
    found.sort_by(|a, b| a.m.partial_cmp(&b.m).unwrap_or(core::cmp::Ordering::Equal));
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub branch_id: usize,
    pub point: FixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchDiagram {
    /// Descending.
    pub times: Vec<f64>,
    pub points: Vec<Vec<BranchPoint>>,
    pub jump_tol: f64,
}

impl BranchDiagram {
    pub fn branch_count(&self, k: usize) -> usize {
        self.points[k].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &BranchPoint)> + '_ {
        self.times
            .iter()
            .zip(&self.points)
            .flat_map(|(t, ps)| ps.iter().map(move |p| (*t, p)))
    }
}

/// Nearest-continuation tracking: points at consecutive times are matched
/// greedily by ascending distance, each previous branch used at most once,
/// and only within `jump_tol`. Unmatched points open new branches.
pub fn track_branches(times: Vec<f64>, per_time: Vec<Vec<FixedPoint>>, jump_tol: f64) -> BranchDiagram {
    let mut next_id = 0;
    let mut points: Vec<Vec<BranchPoint>> = Vec::with_capacity(per_time.len());
    for fps in per_time {
        let mut ids: Vec<Option<usize>> = vec![None; fps.len()];
        if let Some(prev) = points.last() {
            let mut pairs = Vec::new();
            for (i, fp) in fps.iter().enumerate() {
                for (j, p) in prev.iter().enumerate() {
                    let dist = linalg::dist(&fp.m, &p.point.m);
                    if dist < jump_tol {
                        pairs.push((dist, i, j));
                    }
                }
            }
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
            let mut used = vec![false; prev.len()];
            for (_, i, j) in pairs {
                if ids[i].is_none() && !used[j] {
                    ids[i] = Some(prev[j].branch_id);
                    used[j] = true;
                }
            }
        }
        let row = fps
            .into_iter()
            .zip(ids)
            .map(|(point, id)| {
                let branch_id = id.unwrap_or_else(|| {
                    next_id += 1;
                    next_id - 1
                });
                BranchPoint { branch_id, point }
            })
            .collect();
        points.push(row);
    }
    BranchDiagram {
        times,
        points,
        jump_tol,
    }
}

/// `0.05 ×` the support diameter, floored at the distinctness tolerance.
pub fn default_jump_tol(target: &Target) -> f64 {
    (JUMP_FRACTION * target.support_diameter()).max(DISTINCT_TOL)
}

pub fn bifurcation_scan(t_grid: &[f64], target: &Target, sigma: f64, seeds: &[Vec<f64>]) -> Result<BranchDiagram> {
    if t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("t grid must be strictly descending".to_string()));
    }
    if seeds.len() < 3 {
        return Err(Error::InvalidParameter("at least three seeds are required".to_string()));
    }
    let per_time = t_grid
        .iter()
        .map(|&t| fixed_points_at(t, target, sigma, seeds))
        .collect::<Result<Vec<_>>>()?;
    Ok(track_branches(t_grid.to_vec(), per_time, default_jump_tol(target)))
}

/// Trivial-branch fixed point continued by Newton from `m0`.
fn trivial_point(t: f64, m0: &[f64], target: &Target, sigma: f64) -> Result<FixedPoint> {
    newton_fixed_point(t, &vec![0.0; target.dim()], m0, target, sigma)
}

/// `t` at which the leading eigenvalue of `β(t)C` on the trivial branch
/// crosses 1, located by a logarithmic scan followed by bisection.
pub fn critical_time(target: &Target, sigma: f64) -> Result<f64> {
    Ok(critical_point(target, sigma)?.t)
}

/// The trivial-branch fixed point at the critical time.
pub fn critical_point(target: &Target, sigma: f64) -> Result<FixedPoint> {
    let (spread, _) = target.covariance().leading_eigen();
    if !(spread > 0.0) {
        return Err(Error::NoBracket);
    }
    let t_hi = 4.0 * spread / (sigma * sigma);
    let grid = log_grid(t_hi, t_hi * 1e-3, TC_SCAN_POINTS);
    let mut m = target.mean();
    let mut prev: Option<FixedPoint> = None;
    for &t in &grid {
        let fp = match trivial_point(t, &m, target, sigma) {
            Ok(fp) => fp,
            Err(Error::NoConvergence { .. }) => break,
            Err(e) => return Err(e),
        };
        if let Some(p) = prev.as_ref().filter(|_| fp.leading_eigenvalue >= 1.0) {
            let (lo, hi) = (fp.t, p.t);
            let mut seed = p.m.clone();
            let mut failure = None;
            let tc = bisect(
                |t| match trivial_point(t, &seed, target, sigma) {
                    Ok(q) => {
                        seed = q.m;
                        q.leading_eigenvalue - 1.0
                    }
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                },
                lo,
                hi,
                TC_TOL,
            )
            .ok_or(Error::NoBracket)?;
            if let Some(e) = failure {
                return Err(e);
            }
            return trivial_point(tc, &p.m, target, sigma);
        }
        if fp.leading_eigenvalue >= 1.0 {
            // Already past the transition at the top of the scan.
            return Err(Error::NoBracket);
        }
        m = fp.m.clone();
        prev = Some(fp);
    }
    Err(Error::NoBracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExponentName {
    BetaOrder,
    Gamma,
    Delta,
}

impl ExponentName {
    pub fn label(self) -> &'static str {
        match self {
            Self::BetaOrder => "beta_order",
            Self::Gamma => "gamma",
            Self::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub name: ExponentName,
    pub value: f64,
    pub stderr: f64,
    /// `(τ_lo, τ_hi)` for `beta_order` and `gamma`, `(m_lo, m_hi)` for `delta`.
    pub window: (f64, f64),
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalExponents {
    pub t_c: f64,
    pub beta_order: ExponentFit,
    pub delta: ExponentFit,
    pub gamma: ExponentFit,
}

impl CriticalExponents {
    pub fn fits(&self) -> [&ExponentFit; 3] {
        [&self.beta_order, &self.delta, &self.gamma]
    }
}

fn accept(name: ExponentName, xs: &[f64], ys: &[f64], sign: f64, window: (f64, f64)) -> Result<ExponentFit> {
    let fit = linear_fit(xs, ys).ok_or(Error::FitRejected {
        name: name.label(),
        r_squared: f64::NAN,
    })?;
    if !(fit.r_squared > MIN_R_SQUARED) {
        return Err(Error::FitRejected {
            name: name.label(),
            r_squared: fit.r_squared,
        });
    }
    Ok(ExponentFit {
        name,
        value: sign * fit.slope,
        stderr: fit.slope_stderr,
        window,
        r_squared: fit.r_squared,
    })
}

/// Order-parameter (`m ∼ (−τ)^β`), critical-isotherm (`h ∼ m^δ`) and
/// susceptibility (`χ ∼ τ^{−γ}`) exponents from fixed fit windows.
pub fn fit_critical_exponents(target: &Target, sigma: f64) -> Result<CriticalExponents> {
    let crit = critical_point(target, sigma)?;
    let t_c = crit.t;
    let m_c = crit.m.clone();
    let d = target.dim();
    let b = beta(t_c, sigma);
    let (_, dir) = thermo::moments(&m_c, b, target, true)?
        .cov
        .expect("covariance requested")
        .leading_eigen();
    let scale = target.support_diameter().max(f64::MIN_POSITIVE);
    let offsets = log_grid(1e-3, 1e-1, FIT_POINTS);
    let zero = vec![0.0; d];
    let along = |m: &[f64], s: f64| -> Vec<f64> { m.iter().zip(&dir).map(|(a, v)| a + s * v).collect() };

    // Ordered phase just below t_c: distance of the stable branch from the
    // trivial one.
    let mut xs = Vec::with_capacity(FIT_POINTS);
    let mut ys = Vec::with_capacity(FIT_POINTS);
    for &s in &offsets {
        let t = t_c * (1.0 - s);
        let triv = trivial_point(t, &m_c, target, sigma)?;
        let seed = along(&triv.m, 0.25 * scale * (3.0 * s).sqrt());
        let fp = solve_self_consistency(t, &zero, &seed, target, sigma)?;
        xs.push(s.ln());
        ys.push(linalg::dist(&fp.m, &triv.m).ln());
    }
    let beta_order = accept(ExponentName::BetaOrder, &xs, &ys, 1.0, (-0.1 * t_c, -1e-3 * t_c))?;

    // Critical isotherm: field along the soft mode.
    let fields = log_grid(1e-6, 1e-2, FIT_POINTS);
    let (mut xs, mut ys) = (Vec::with_capacity(FIT_POINTS), Vec::with_capacity(FIT_POINTS));
    let (mut m_lo, mut m_hi) = (f64::INFINITY, 0.0f64);
    for &s in &fields {
        let h: Vec<f64> = dir.iter().map(|v| s * v).collect();
        let seed = along(&m_c, 0.5 * scale * s.cbrt());
        let fp = solve_self_consistency(t_c, &h, &seed, target, sigma)?;
        let order = linalg::dist(&fp.m, &m_c);
        m_lo = m_lo.min(order);
        m_hi = m_hi.max(order);
        xs.push(order.ln());
        ys.push(s.ln());
    }
    let delta = accept(ExponentName::Delta, &xs, &ys, 1.0, (m_lo, m_hi))?;

    // Disordered phase just above t_c: resummed response on the trivial
    // branch.
    let (mut xs, mut ys) = (Vec::with_capacity(FIT_POINTS), Vec::with_capacity(FIT_POINTS));
    for &s in &offsets {
        let t = t_c * (1.0 + s);
        let triv = trivial_point(t, &m_c, target, sigma)?;
        let chi = resummed(&triv, target, sigma)?;
        let (lead, _) = chi.leading_eigen();
        xs.push(s.ln());
        ys.push(lead.ln());
    }
    let gamma = accept(ExponentName::Gamma, &xs, &ys, -1.0, (1e-3 * t_c, 0.1 * t_c))?;

    Ok(CriticalExponents {
        t_c,
        beta_order,
        delta,
        gamma,
    })
}

fn resummed(fp: &FixedPoint, target: &Target, sigma: f64) -> Result<Matrix> {
    let b = beta(fp.t, sigma);
    let bc = thermo::moments(&shifted(&fp.m, &fp.h), b, target, true)?
        .cov
        .expect("covariance requested")
        .scaled(b);
    let j = Matrix::identity(bc.dim()).sub(&bc);
    j.solve_matrix(&bc, PIVOT_TOL).ok_or(Error::SingularResummation)
}

/// `∂m/∂h` at zero field on the branch reached from `m0`:
/// `(I − βC)^{−1} βC`.
pub fn self_consistent_susceptibility(t: f64, target: &Target, sigma: f64, m0: &[f64]) -> Result<Matrix> {
    let fp = solve_self_consistency(t, &vec![0.0; target.dim()], m0, target, sigma)?;
    resummed(&fp, target, sigma)
}

/// Same response at a known fixed point.
pub fn fixed_point_susceptibility(fp: &FixedPoint, target: &Target, sigma: f64) -> Result<Matrix> {
    resummed(fp, target, sigma)
}
