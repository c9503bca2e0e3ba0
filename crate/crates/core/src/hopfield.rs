//! Modern Hopfield energy and its link to the regularized free energy.
//!
//! `E(x) = −β⁻¹ log Σ_j exp(β x·y_j) + ½‖x‖²` for unit-norm patterns equals
//! the regularized free energy `F̃` of the uniform delta mixture on the same
//! patterns, up to the constant `E − F̃ = −(β⁻¹ log N + ½)`. Gradient
//! descent on `E` with unit step is the usual softmax retrieval update.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::linalg;
use crate::numeric::{logsumexp, softmax_in_place};
use crate::rng::fill_standard_normal;
use crate::targets::Target;
use crate::thermo::{self, ThermoState};
use crate::{Error, Result};

pub const GRADIENT_TOL: f64 = 1e-9;
/// Retrieved state must lie within `RETRIEVAL_RADIUS / β` of a pattern.
pub const RETRIEVAL_RADIUS: f64 = 10.0;
pub const GRADIENT_MATCH_TOL: f64 = 1e-8;
pub const OFFSET_MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    patterns: Vec<f64>,
    n: usize,
    d: usize,
    pub beta: f64,
}

impl PatternSet {
    /// Patterns rescaled to unit norm.
    pub fn new(patterns: Vec<Vec<f64>>, beta: f64) -> Result<Self> {
        Self::build(patterns, beta, true)
    }

    /// Patterns kept as given.
    pub fn unnormalized(patterns: Vec<Vec<f64>>, beta: f64) -> Result<Self> {
        Self::build(patterns, beta, false)
    }

    fn build(patterns: Vec<Vec<f64>>, beta: f64, normalize: bool) -> Result<Self> {
        let n = patterns.len();
        if n == 0 {
            return Err(Error::InvalidParameter("at least one pattern is required".to_string()));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".to_string()));
        }
        let d = patterns[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("patterns must have positive dimension".to_string()));
        }
        let mut flat = Vec::with_capacity(n * d);
        for p in &patterns {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("pattern has non-finite entries".to_string()));
            }
            let scale = if normalize {
                let norm = linalg::norm(p);
                if norm == 0.0 {
                    return Err(Error::InvalidParameter("cannot normalize a zero pattern".to_string()));
                }
                1.0 / norm
            } else {
                1.0
            };
            flat.extend(p.iter().map(|v| v * scale));
        }
        Ok(Self { patterns: flat, n, d, beta })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn pattern(&self, j: usize) -> &[f64] {
        &self.patterns[j * self.d..(j + 1) * self.d]
    }

    pub fn patterns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.patterns.chunks_exact(self.d)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".to_string()));
        }
        Ok(Self { beta, ..self.clone() })
    }

    /// Uniform delta mixture on the patterns.
    pub fn to_target(&self) -> Result<Target> {
        Target::discrete(self.patterns().map(<[f64]>::to_vec).collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.patterns().map(|y| self.beta * linalg::dot(x, y)).collect()
    }
}

pub fn hopfield_energy(x: &[f64], patterns: &PatternSet) -> Result<f64> {
    patterns.check(x)?;
    Ok(-logsumexp(&patterns.logits(x)) / patterns.beta + 0.5 * linalg::norm_sq(x))
}

/// `∇E = x − Σ_j softmax_j(βx·y) y_j`.
pub fn hopfield_gradient(x: &[f64], patterns: &PatternSet) -> Result<Vec<f64>> {
    patterns.check(x)?;
    let mut w = patterns.logits(x);
    softmax_in_place(&mut w);
    let mut g = x.to_vec();
    for (wj, y) in w.iter().zip(patterns.patterns()) {
        g.iter_mut().zip(y).for_each(|(gi, yi)| *gi -= wj * yi);
    }
    Ok(g)
}

/// `E − F̃ = −(β⁻¹ log N + ½)` for unit-norm patterns.
pub fn expected_offset(patterns: &PatternSet) -> f64 {
    -((patterns.len() as f64).ln() / patterns.beta + 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub probes: usize,
    pub max_gradient_deviation: f64,
    pub worst_probe: usize,
    /// Mean of `E − F̃` over probes.
    pub offset: f64,
    /// `max − min` of `E − F̃` over probes.
    pub offset_spread: f64,
    pub expected_offset: f64,
}

/// Compares `∇E` with `∇F̃` of the uniform delta mixture at `trials` probes
/// drawn from `N(0, I)`. The pattern `β` must equal `β(t)`.
pub fn equivalence_check<R: Rng + ?Sized>(
    patterns: &PatternSet,
    t: f64,
    sigma: f64,
    trials: usize,
    rng: &mut R,
) -> Result<EquivalenceReport> {
    let bt = thermo::beta(t, sigma);
    if (bt - patterns.beta).abs() > 1e-12 * bt {
        return Err(Error::InvalidParameter("pattern beta must equal 1/(tσ²)".to_string()));
    }
    let target = patterns.to_target()?;
    let mut x = vec![0.0; patterns.dim()];
    let mut report = EquivalenceReport {
        probes: trials,
        max_gradient_deviation: 0.0,
        worst_probe: 0,
        offset: 0.0,
        offset_spread: 0.0,
        expected_offset: expected_offset(patterns),
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for probe in 0..trials {
        fill_standard_normal(rng, &mut x);
        let state = ThermoState::new(x.clone(), t, sigma)?;
        let g_hop = hopfield_gradient(&x, patterns)?;
        let g_fe = thermo::regularized_free_energy_gradient(&state, &target)?;
        let dev = g_hop.iter().zip(&g_fe).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev > report.max_gradient_deviation {
            report.max_gradient_deviation = dev;
            report.worst_probe = probe;
        }
        let off = hopfield_energy(&x, patterns)? - thermo::free_energy(&state, &target, true)?;
        report.offset += off / trials as f64;
        lo = lo.min(off);
        hi = hi.max(off);
    }
    report.offset_spread = if trials > 0 { hi - lo } else { 0.0 };
    if report.max_gradient_deviation > GRADIENT_MATCH_TOL {
        return Err(Error::MismatchDetected {
            max_deviation: report.max_gradient_deviation,
            probe: report.worst_probe,
        });
    }
    if report.offset_spread > OFFSET_MATCH_TOL {
        return Err(Error::MismatchDetected {
            max_deviation: report.offset_spread,
            probe: report.worst_probe,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub x: Vec<f64>,
    /// Nearest pattern, if within `10/β`.
    pub index: Option<usize>,
    /// Distance to the nearest pattern.
    pub distance: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Gradient descent `x ← x − η∇E` until `‖∇E‖ < 1e−9`.
pub fn retrieve(x0: &[f64], patterns: &PatternSet, step_size: f64, max_iters: usize) -> Result<Retrieval> {
    retrieve_within(x0, patterns, step_size, max_iters, RETRIEVAL_RADIUS)
}

/// As [`retrieve`], identifying a pattern within `radius / β`.
pub fn retrieve_within(x0: &[f64], patterns: &PatternSet, step_size: f64, max_iters: usize, radius: f64) -> Result<Retrieval> {
    patterns.check(x0)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("retrieval radius must be positive".to_string()));
    }
    if !(step_size > 0.0 && step_size <= 1.0) {
        return Err(Error::InvalidParameter("step size must lie in (0, 1]".to_string()));
    }
    let mut x = x0.to_vec();
    let mut g_norm = f64::INFINITY;
    for it in 0..=max_iters {
        let g = hopfield_gradient(&x, patterns)?;
        g_norm = linalg::norm(&g);
        if g_norm < GRADIENT_TOL {
            let (index, distance) = nearest(&x, patterns);
            let hit = distance <= radius / patterns.beta;
            return Ok(Retrieval {
                x,
                index: hit.then_some(index),
                distance,
                iterations: it,
                gradient_norm: g_norm,
            });
        }
        if it == max_iters {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= step_size * gi);
    }
    Err(Error::NoConvergence {
        residual: g_norm,
        iterations: max_iters,
    })
}

fn nearest(x: &[f64], patterns: &PatternSet) -> (usize, f64) {
    patterns
        .patterns()
        .enumerate()
        .map(|(j, y)| (j, linalg::dist(x, y)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty pattern set")
}
