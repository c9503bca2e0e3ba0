use difflab_core::hopfield::{equivalence_check, retrieve_within, PatternSet, RETRIEVAL_RADIUS};
use difflab_core::rng::stream;
use difflab_core::Error;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use super::{at_least, num, positive, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::{Cell, Table};

/// Random unit patterns; gradient equivalence with the regularized free
/// energy and retrieval from perturbed patterns.
pub struct Hopfield {
    patterns: PatternSet,
    sigma: f64,
    seed: u64,
    probes: usize,
    equivalence_probes: usize,
    perturbation: f64,
    step_size: f64,
    max_iters: usize,
    radius: f64,
}

impl Hopfield {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let n = at_least(cfg, "hopfield.patterns", cfg.get_or("hopfield.patterns", 4usize)?, 1)?;
        let d = at_least(cfg, "hopfield.dim", cfg.get_or("hopfield.dim", 16usize)?, 1)?;
        let beta = positive(cfg, "hopfield.beta", cfg.get_or("hopfield.beta", 64.0)?)?;
        let probes = cfg.get_or("hopfield.probes", 100usize)?;
        let equivalence_probes = cfg.get_or("hopfield.equivalence_probes", 100usize)?;
        let perturbation: f64 = cfg.get_or("hopfield.perturbation", 0.1)?;
        if !(perturbation.is_finite() && perturbation >= 0.0) {
            return Err(cfg.invalid("hopfield.perturbation", "must be non-negative"));
        }
        let step_size: f64 = cfg.get_or("hopfield.step_size", 1.0)?;
        if !(step_size > 0.0 && step_size <= 1.0) {
            return Err(cfg.invalid("hopfield.step_size", "must lie in (0, 1]"));
        }
        let max_iters = at_least(cfg, "hopfield.max_iters", cfg.get_or("hopfield.max_iters", 1000usize)?, 1)?;
        let radius = positive(cfg, "hopfield.radius", cfg.get_or("hopfield.radius", RETRIEVAL_RADIUS)?)?;
        let mut rng = stream(common.seed, 0);
        let raw: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let patterns = PatternSet::new(raw, beta).map_err(|e| cfg.invalid("hopfield.patterns", e.to_string()))?;
        Ok(Self {
            patterns,
            sigma: common.sigma,
            seed: common.seed,
            probes,
            equivalence_probes,
            perturbation,
            step_size,
            max_iters,
            radius,
        })
    }
}

impl Job for Hopfield {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let ps = &self.patterns;
        let t = 1.0 / (ps.beta * self.sigma * self.sigma);
        let eq = equivalence_check(ps, t, self.sigma, self.equivalence_probes, &mut stream(self.seed, 1))?;
        let rows = (0..self.probes)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(self.seed, 2 + i as u64);
                let k = i % ps.len();
                let x0: Vec<f64> = ps
                    .pattern(k)
                    .iter()
                    .map(|y| y + self.perturbation * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                match retrieve_within(&x0, ps, self.step_size, self.max_iters, self.radius) {
                    Ok(r) => Ok((k, true, r.index, r.distance, r.iterations)),
                    Err(Error::NoConvergence { .. }) => Ok((k, false, None, f64::NAN, self.max_iters)),
                    Err(e) => Err(RunError::from(e)),
                }
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        let mut table = Table::new(["probe_id", "converged", "retrieved_index", "distance", "iters"]);
        let mut successes = 0;
        for (i, &(k, converged, index, distance, iters)) in rows.iter().enumerate() {
            if index == Some(k) {
                successes += 1;
            }
            let distance = if converged { Cell::Float(distance) } else { Cell::Text(String::new()) };
            let index = index.map_or(-1, |j| j as i64);
            table.push(vec![i.into(), converged.into(), index.into(), distance, iters.into()]);
        }
        out.csv("retrieval.csv", &table)?;
        out.json(
            "summary.json",
            &json!({
                "patterns": ps.len(),
                "dim": ps.dim(),
                "beta": num(ps.beta),
                "t": num(t),
                "equivalence": {
                    "probes": eq.probes,
                    "max_gradient_deviation": num(eq.max_gradient_deviation),
                    "offset": num(eq.offset),
                    "offset_spread": num(eq.offset_spread),
                    "expected_offset": num(eq.expected_offset),
                },
                "retrieval": {
                    "probes": self.probes,
                    "successes": successes,
                    "perturbation": num(self.perturbation),
                },
            }),
        )?;
        Ok(format!(
            "max gradient deviation {:.3e}, retrieval {successes}/{}",
            eq.max_gradient_deviation, self.probes
        ))
    }
}
