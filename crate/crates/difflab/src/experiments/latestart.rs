use difflab_core::criticality::critical_time;
use difflab_core::dynamics::{late_start_init, Schedule};
use difflab_core::rng::stream;
use rayon::prelude::*;
use serde_json::json;

use super::sample::Sampler;
use super::{at_least, frequencies, num, positive, require_enumerable, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::Table;

/// Compares terminal atom frequencies from full-noise starts with starts
/// drawn from the moment-matched Gaussian at `t_start`.
pub struct LateStart {
    sampler: Sampler,
    atoms: Vec<Vec<f64>>,
    seed: u64,
    trajectories: usize,
    factor: f64,
    t_start: Option<f64>,
}

impl LateStart {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let sampler = Sampler::from_config(cfg, common)?;
        let atoms = require_enumerable(cfg, &sampler.target)?;
        let trajectories = at_least(cfg, "latestart.trajectories", cfg.get_or("latestart.trajectories", 10_000usize)?, 1)?;
        let factor = positive(cfg, "latestart.factor", cfg.get_or("latestart.factor", 3.0)?)?;
        let t_start = cfg
            .opt::<f64>("latestart.t_start")?
            .map(|t| positive(cfg, "latestart.t_start", t))
            .transpose()?;
        if let Some(t) = t_start {
            if t <= sampler.schedule.t_min {
                return Err(cfg.invalid("latestart.t_start", "must exceed schedule.t_min"));
            }
        }
        Ok(Self {
            sampler,
            atoms,
            seed: common.seed,
            trajectories,
            factor,
            t_start,
        })
    }
}

impl Job for LateStart {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let s = &self.sampler;
        let t_c = match self.t_start {
            Some(_) => None,
            None => Some(critical_time(&s.target, s.sigma)?),
        };
        let t_start = self.t_start.unwrap_or_else(|| self.factor * t_c.unwrap_or(0.0));
        let late = Schedule::new(t_start, s.schedule.t_min, s.schedule.steps, s.schedule.spacing)?;
        let n = self.trajectories as u64;
        let full = (0..n)
            .into_par_iter()
            .map(|i| Ok(s.full_noise(self.seed, i)?.terminal().to_vec()))
            .collect::<Result<Vec<_>, RunError>>()?;
        let late_runs = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(self.seed, n + i);
                let x0 = late_start_init(t_start, &s.target, s.sigma, &mut rng, 1)?.remove(0);
                Ok(s.integrate(&x0, &late, &mut rng)?.terminal().to_vec())
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        let f_full = frequencies(&self.atoms, &full);
        let f_late = frequencies(&self.atoms, &late_runs);
        let mut table = Table::new(["atom", "full_noise", "late_start", "abs_diff"]);
        let mut max_diff: f64 = 0.0;
        for (j, (a, b)) in f_full.iter().zip(&f_late).enumerate() {
            max_diff = max_diff.max((a - b).abs());
            table.push(vec![j.into(), (*a).into(), (*b).into(), (a - b).abs().into()]);
        }
        out.csv("frequencies.csv", &table)?;
        out.json(
            "summary.json",
            &json!({
                "t_c": t_c.map(num),
                "t_start": num(t_start),
                "trajectories": self.trajectories,
                "max_abs_diff": num(max_diff),
            }),
        )?;
        Ok(format!("t_start = {t_start:.6}, max |Δfrequency| = {max_diff:.4}"))
    }
}
