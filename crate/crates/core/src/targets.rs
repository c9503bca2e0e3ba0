//! Target distributions φ(y) and their exact support operations.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::linalg::{self, Matrix};
use crate::numeric::logsumexp;
use crate::rng::fill_standard_normal;
use crate::{Error, Result};

/// Largest diffused-Ising dimension that is enumerated exactly (2^24 states).
pub const MAX_ISING_DIM: usize = 24;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const ATOM_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    TwoDeltas,
    Discrete,
    Hypersphere,
    DiffusedIsing,
}

/// Unvalidated description of a target.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// φ = ½δ(y+1) + ½δ(y−1) in one dimension.
    TwoDeltas,
    /// Weighted point set; uniform when `weights` is `None`.
    Discrete {
        points: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    },
    /// Uniform measure on the sphere of radius `radius` in `R^dim`.
    Hypersphere { dim: usize, radius: f64 },
    /// Ising Gibbs measure `log φ(y) = −(1/2T) Σ_{j≠k} y_j y_k W_jk + c` on {−1, +1}^d.
    DiffusedIsing { coupling: Matrix, temperature: f64 },
}

/// One point of an enumerable support with its normalized log-weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportAtom {
    pub point: Vec<f64>,
    pub log_weight: f64,
}

#[derive(Debug, Clone)]
enum Support {
    Atoms { points: Vec<f64>, log_weights: Vec<f64> },
    Spins { log_weights: Vec<f64> },
    Sphere { radius: f64 },
}

/// A validated, immutable target distribution.
#[derive(Debug, Clone)]
pub struct Target {
    spec: TargetSpec,
    dim: usize,
    support: Support,
}

pub fn construct_target(spec: TargetSpec) -> Result<Target> {
    Target::new(spec)
}

pub fn enumerate_support(target: &Target) -> Result<Vec<SupportAtom>> {
    target.enumerate_support()
}

pub fn sample_target<R: Rng + ?Sized>(target: &Target, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    target.sample(n, rng)
}

impl Target {
    pub fn new(spec: TargetSpec) -> Result<Self> {
        let (dim, support) = match &spec {
            TargetSpec::TwoDeltas => (
                1,
                Support::Atoms {
                    points: vec![-1.0, 1.0],
                    log_weights: vec![-core::f64::consts::LN_2; 2],
                },
            ),
            TargetSpec::Discrete { points, weights } => discrete_support(points, weights.as_deref())?,
            TargetSpec::Hypersphere { dim, radius } => {
                if *dim == 0 {
                    return Err(Error::InvalidTarget("hypersphere dimension must be ≥ 1".to_string()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidTarget("hypersphere radius must be positive".to_string()));
                }
                (*dim, Support::Sphere { radius: *radius })
            }
            TargetSpec::DiffusedIsing {
                coupling,
                temperature,
            } => ising_support(coupling, *temperature)?,
        };
        Ok(Self { spec, dim, support })
    }

    pub fn two_deltas() -> Self {
        Self::new(TargetSpec::TwoDeltas).expect("two-deltas target is always valid")
    }

    pub fn discrete(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(TargetSpec::Discrete {
            points,
            weights: None,
        })
    }

    pub fn discrete_weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::new(TargetSpec::Discrete {
            points,
            weights: Some(weights),
        })
    }

    pub fn hypersphere(dim: usize, radius: f64) -> Result<Self> {
        Self::new(TargetSpec::Hypersphere { dim, radius })
    }

    pub fn diffused_ising(coupling: Matrix, temperature: f64) -> Result<Self> {
        Self::new(TargetSpec::DiffusedIsing {
            coupling,
            temperature,
        })
    }

    /// The four-delta configuration {(±1, 0), (0, ±1)}.
    pub fn four_deltas() -> Self {
        Self::discrete(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .expect("four-delta target is always valid")
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn kind(&self) -> TargetKind {
        match self.spec {
            TargetSpec::TwoDeltas => TargetKind::TwoDeltas,
            TargetSpec::Discrete { .. } => TargetKind::Discrete,
            TargetSpec::Hypersphere { .. } => TargetKind::Hypersphere,
            TargetSpec::DiffusedIsing { .. } => TargetKind::DiffusedIsing,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_enumerable(&self) -> bool {
        !matches!(self.support, Support::Sphere { .. })
    }

    /// Sphere radius, for hypersphere targets.
    pub fn sphere_radius(&self) -> Option<f64> {
        match self.support {
            Support::Sphere { radius } => Some(radius),
            _ => None,
        }
    }

    pub fn atom_count(&self) -> Option<usize> {
        match &self.support {
            Support::Atoms { log_weights, .. } | Support::Spins { log_weights } => Some(log_weights.len()),
            Support::Sphere { .. } => None,
        }
    }

    /// Normalized log-weight of atom `j`.
    pub fn atom_log_weight(&self, j: usize) -> f64 {
        match &self.support {
            Support::Atoms { log_weights, .. } | Support::Spins { log_weights } => log_weights[j],
            Support::Sphere { .. } => panic!("hypersphere has no atoms"),
        }
    }

    /// Writes atom `j` into `out` (length `dim`).
    pub fn write_atom(&self, j: usize, out: &mut [f64]) {
        match &self.support {
            Support::Atoms { points, .. } => out.copy_from_slice(&points[j * self.dim..(j + 1) * self.dim]),
            Support::Spins { .. } => write_spins(j, out),
            Support::Sphere { .. } => panic!("hypersphere has no atoms"),
        }
    }

    pub fn atom(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.write_atom(j, &mut out);
        out
    }

    /// Calls `f(index, point, log_weight)` for every atom.
    pub fn for_each_atom(&self, mut f: impl FnMut(usize, &[f64], f64)) -> Result<()> {
        match &self.support {
            Support::Atoms { points, log_weights } => {
                for (j, lw) in log_weights.iter().enumerate() {
                    f(j, &points[j * self.dim..(j + 1) * self.dim], *lw);
                }
                Ok(())
            }
            Support::Spins { log_weights } => {
                let mut y = vec![0.0; self.dim];
                for (j, lw) in log_weights.iter().enumerate() {
                    write_spins(j, &mut y);
                    f(j, &y, *lw);
                }
                Ok(())
            }
            Support::Sphere { .. } => Err(Error::ContinuousSupport),
        }
    }

    pub fn enumerate_support(&self) -> Result<Vec<SupportAtom>> {
        let mut atoms = Vec::with_capacity(self.atom_count().unwrap_or(0));
        self.for_each_atom(|_, y, lw| {
            atoms.push(SupportAtom {
                point: y.to_vec(),
                log_weight: lw,
            })
        })?;
        Ok(atoms)
    }

    /// `log φ(y)` for a support point. The hypersphere has no atomic weights;
    /// its constant log-density is reported as 0.
    pub fn log_density_at(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        match &self.support {
            Support::Atoms { points, log_weights } => {
                let matches: Vec<f64> = log_weights
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| {
                        points[j * self.dim..(j + 1) * self.dim]
                            .iter()
                            .zip(y)
                            .all(|(a, b)| (a - b).abs() <= ATOM_MATCH_TOL)
                    })
                    .map(|(_, lw)| *lw)
                    .collect();
                if matches.is_empty() {
                    Err(Error::OffSupport)
                } else {
                    Ok(logsumexp(&matches))
                }
            }
            Support::Spins { log_weights } => {
                let mut index = 0usize;
                for (i, v) in y.iter().enumerate() {
                    if (v - 1.0).abs() <= ATOM_MATCH_TOL {
                        index |= 1 << i;
                    } else if (v + 1.0).abs() > ATOM_MATCH_TOL {
                        return Err(Error::OffSupport);
                    }
                }
                Ok(log_weights[index])
            }
            Support::Sphere { radius } => {
                if (linalg::norm(y) - radius).abs() <= 1e-9 * radius.max(1.0) {
                    Ok(0.0)
                } else {
                    Err(Error::OffSupport)
                }
            }
        }
    }

    /// `n` i.i.d. draws from φ.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match &self.support {
            Support::Sphere { radius } => (0..n)
                .map(|_| {
                    let mut g = vec![0.0; self.dim];
                    loop {
                        fill_standard_normal(rng, &mut g);
                        let norm = linalg::norm(&g);
                        if norm > 0.0 {
                            g.iter_mut().for_each(|v| *v *= radius / norm);
                            break g;
                        }
                    }
                })
                .collect(),
            Support::Atoms { log_weights, .. } | Support::Spins { log_weights } => {
                let index = WeightedIndex::new(log_weights.iter().map(|lw| lw.exp()))
                    .expect("normalized weights are positive");
                (0..n).map(|_| self.atom(index.sample(rng))).collect()
            }
        }
    }

    /// Target mean ⟨y⟩₀.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        let _ = self.for_each_atom(|_, y, lw| {
            let w = lw.exp();
            mean.iter_mut().zip(y).for_each(|(m, v)| *m += w * v);
        });
        mean
    }

    /// Target covariance Cov_φ(y).
    pub fn covariance(&self) -> Matrix {
        if let Support::Sphere { radius } = self.support {
            return Matrix::identity(self.dim).scaled(radius * radius / self.dim as f64);
        }
        let mean = self.mean();
        let d = self.dim;
        let mut cov = Matrix::zeros(d);
        let mut centered = vec![0.0; d];
        let _ = self.for_each_atom(|_, y, lw| {
            let w = lw.exp();
            for i in 0..d {
                centered[i] = y[i] - mean[i];
            }
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += w * centered[i] * centered[j];
                }
            }
        });
        cov
    }

    /// Largest distance between two support points (exact up to 2048
    /// atoms, otherwise twice the largest distance from the mean).
    pub fn support_diameter(&self) -> f64 {
        match &self.support {
            Support::Sphere { radius } => 2.0 * radius,
            Support::Spins { .. } => 2.0 * (self.dim as f64).sqrt(),
            Support::Atoms { points, log_weights } => {
                let n = log_weights.len();
                let d = self.dim;
                if n <= 2048 {
                    let mut best = 0.0f64;
                    for a in 0..n {
                        for b in (a + 1)..n {
                            best = best.max(linalg::dist(&points[a * d..(a + 1) * d], &points[b * d..(b + 1) * d]));
                        }
                    }
                    best
                } else {
                    let mean = self.mean();
                    2.0 * (0..n)
                        .map(|a| linalg::dist(&points[a * d..(a + 1) * d], &mean))
                        .fold(0.0, f64::max)
                }
            }
        }
    }

    /// Common norm of all microstates, if there is one.
    pub fn constant_norm(&self) -> Option<f64> {
        match &self.support {
            Support::Sphere { radius } => Some(*radius),
            Support::Spins { .. } => Some((self.dim as f64).sqrt()),
            Support::Atoms { points, .. } => {
                let d = self.dim;
                let norms: Vec<f64> = points.chunks(d).map(linalg::norm).collect();
                let first = norms[0];
                norms
                    .iter()
                    .all(|n| (n - first).abs() <= 1e-9 * first.max(1.0))
                    .then_some(first)
            }
        }
    }
}

fn write_spins(index: usize, out: &mut [f64]) {
    for (i, v) in out.iter_mut().enumerate() {
        *v = if (index >> i) & 1 == 1 { 1.0 } else { -1.0 };
    }
}

fn discrete_support(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<(usize, Support)> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidTarget("discrete target needs at least one point".to_string()));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidTarget("points must have dimension ≥ 1".to_string()));
    }
    let mut flat = Vec::with_capacity(points.len() * dim);
    for (j, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::InvalidTarget(format!(
                "point {j} has dimension {} but point 0 has {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTarget(format!("point {j} has non-finite entries")));
        }
        flat.extend_from_slice(p);
    }
    let n = points.len();
    let log_weights = match weights {
        None => vec![-(n as f64).ln(); n],
        Some(w) => {
            if w.len() != n {
                return Err(Error::BadWeights(format!("{} weights for {n} points", w.len())));
            }
            if let Some(bad) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::BadWeights(format!("weight {bad} is not positive")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() >= WEIGHT_SUM_TOL {
                return Err(Error::BadWeights(format!("weights sum to {sum}, not 1")));
            }
            w.iter().map(|v| (v / sum).ln()).collect()
        }
    };
    Ok((
        dim,
        Support::Atoms {
            points: flat,
            log_weights,
        },
    ))
}

fn ising_support(coupling: &Matrix, temperature: f64) -> Result<(usize, Support)> {
    let d = coupling.dim();
    if d == 0 {
        return Err(Error::InvalidTarget("Ising dimension must be ≥ 1".to_string()));
    }
    if d > MAX_ISING_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: MAX_ISING_DIM,
        });
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidTarget("Ising temperature must be positive".to_string()));
    }
    if coupling.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTarget("coupling has non-finite entries".to_string()));
    }
    if !coupling.is_symmetric(0.0) || (0..d).any(|i| coupling[(i, i)] != 0.0) {
        return Err(Error::NonSymmetricCoupling);
    }

    // Gray-code walk: state g = i ^ (i >> 1) differs from its predecessor by
    // one spin, so the pair sum Σ_{j<k} y_j y_k W_jk updates in O(d).
    let n = 1usize << d;
    let mut log_weights = vec![0.0; n];
    let mut y = vec![-1.0; d];
    let mut pair: f64 = (0..d).map(|j| ((j + 1)..d).map(|k| coupling[(j, k)]).sum::<f64>()).sum();
    log_weights[0] = -pair / temperature;
    for i in 1..n {
        let bit = i.trailing_zeros() as usize;
        let field = linalg::dot(coupling.row(bit), &y);
        pair -= 2.0 * y[bit] * field;
        y[bit] = -y[bit];
        log_weights[i ^ (i >> 1)] = -pair / temperature;
    }
    let lse = logsumexp(&log_weights);
    log_weights.iter_mut().for_each(|v| *v -= lse);
    Ok((d, Support::Spins { log_weights }))
}
