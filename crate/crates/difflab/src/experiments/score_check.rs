use difflab_core::rng::stream;
use difflab_core::thermo::{log_marginal, score, ThermoState};
use difflab_core::Target;
use difflab_core::dynamics::forward_sample;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{at_least, num, positive, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::Table;

/// Exact score against central differences of `log p_t` at states drawn
/// from the noised marginal, `t` log-uniform in `[t_min, t_max]`.
pub struct ScoreCheck {
    target: Target,
    sigma: f64,
    seed: u64,
    probes: usize,
    t_min: f64,
    t_max: f64,
    fd_step: f64,
    tolerance: f64,
}

impl ScoreCheck {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let target = crate::targets::target_from_config(cfg)?;
        let probes = at_least(cfg, "score-check.probes", cfg.get_or("score-check.probes", 200usize)?, 1)?;
        let t_min = positive(cfg, "score-check.t_min", cfg.get_or("score-check.t_min", 0.05)?)?;
        let t_max = positive(cfg, "score-check.t_max", cfg.get_or("score-check.t_max", 4.0)?)?;
        if t_min > t_max {
            return Err(cfg.invalid("score-check.t_min", "must not exceed score-check.t_max"));
        }
        Ok(Self {
            target,
            sigma: common.sigma,
            seed: common.seed,
            probes,
            t_min,
            t_max,
            fd_step: positive(cfg, "score-check.fd_step", cfg.get_or("score-check.fd_step", 1e-5)?)?,
            tolerance: positive(cfg, "score-check.tolerance", cfg.get_or("score-check.tolerance", 1e-5)?)?,
        })
    }

    /// `(t, max_i |score_i − FD_i|)` for probe `i`.
    pub fn probe(&self, i: u64) -> Result<(f64, f64), RunError> {
        let mut rng = stream(self.seed, i);
        let u: f64 = rng.random();
        let t = self.t_min * (self.t_max / self.t_min).powf(u);
        let y = self.target.sample(1, &mut rng).remove(0);
        let x = forward_sample(&y, t, self.sigma, &mut rng)?;
        let s = score(&ThermoState::new(x.clone(), t, self.sigma)?, &self.target)?;
        let mut worst: f64 = 0.0;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += self.fd_step;
            xm[k] -= self.fd_step;
            let lp = log_marginal(&ThermoState::new(xp, t, self.sigma)?, &self.target)?;
            let lm = log_marginal(&ThermoState::new(xm, t, self.sigma)?, &self.target)?;
            worst = worst.max((s[k] - (lp - lm) / (2.0 * self.fd_step)).abs());
        }
        Ok((t, worst))
    }
}

impl Job for ScoreCheck {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let rows = (0..self.probes as u64)
            .into_par_iter()
            .map(|i| self.probe(i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut table = Table::new(["probe_id", "t", "max_abs_error"]);
        let mut max_err: f64 = 0.0;
        for (i, &(t, e)) in rows.iter().enumerate() {
            max_err = max_err.max(e);
            table.push(vec![i.into(), t.into(), e.into()]);
        }
        out.csv("score_check.csv", &table)?;
        let pass = max_err < self.tolerance;
        out.json(
            "summary.json",
            &json!({
                "probes": self.probes,
                "max_abs_error": num(max_err),
                "tolerance": num(self.tolerance),
                "pass": pass,
            }),
        )?;
        let line = format!("max |score - FD gradient| = {max_err:.3e}");
        if pass {
            Ok(line)
        } else {
            Err(RunError::Numerical(format!("{line} exceeds {:.1e}", self.tolerance)))
        }
    }
}
