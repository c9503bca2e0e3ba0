use difflab_core::bath::{
    bath_brownian_integrate, convergence_row, mean_field_projection, pure_state_variance, study_replica,
    study_stream_index, Phase, StudySettings,
};
use difflab_core::dynamics::Schedule;
use difflab_core::rng::stream;
use difflab_core::Target;
use rayon::prelude::*;
use serde_json::json;

use super::sample::trajectory_table;
use super::{at_least, num, positive, schedule_from_config, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::Table;
use crate::targets::target_from_config;

/// Finite-K bath Monte Carlo against the mean-field limit, pure-state
/// variances, and an optional bath-driven Brownian trajectory.
pub struct Bath {
    target: Target,
    sigma: f64,
    k_list: Vec<usize>,
    t_list: Vec<f64>,
    h: Vec<f64>,
    settings: StudySettings,
    variance_temps: Vec<f64>,
    brownian: Option<(f64, Schedule)>,
}

impl Bath {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let target = target_from_config(cfg)?;
        if target.constant_norm().is_none() {
            return Err(cfg.invalid("target.kind", "the bath needs an enumerable target with constant-norm atoms"));
        }
        let d = target.dim();
        let k_list = cfg.list_or("bath.k_list", vec![32usize, 128, 512])?;
        if k_list.iter().any(|&k| k < 2) || k_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg.invalid("bath.k_list", "must be ascending with every K ≥ 2"));
        }
        let t_list = cfg.list_or("bath.t_list", vec![0.5])?;
        for &t in &t_list {
            positive(cfg, "bath.t_list", t)?;
        }
        let h_raw = cfg.list_or("bath.h", vec![0.01])?;
        let h = match h_raw.len() {
            1 => {
                let mut h = vec![0.0; d];
                h[0] = h_raw[0];
                h
            }
            n if n == d => h_raw,
            _ => return Err(cfg.invalid("bath.h", format!("expected 1 or {d} entries"))),
        };
        let replicas = at_least(cfg, "bath.replicas", cfg.get_or("bath.replicas", 16usize)?, 8)?;
        let sweeps = at_least(cfg, "bath.sweeps", cfg.get_or("bath.sweeps", 4000usize)?, 10)?;
        let burn_in: usize = cfg.get_or("bath.burn_in", 500)?;
        let variance_temps = cfg.list_or("bath.variance_temps", vec![1.2, 1.5, 2.0, 3.0, 5.0])?;
        for &t in &variance_temps {
            positive(cfg, "bath.variance_temps", t)?;
        }
        let brownian_h: f64 = cfg.get_or("bath.brownian_h", 0.0)?;
        let brownian = if brownian_h > 0.0 {
            Some((brownian_h, schedule_from_config(cfg, 4.0)?))
        } else {
            None
        };
        Ok(Self {
            target,
            sigma: common.sigma,
            k_list,
            t_list,
            h,
            settings: StudySettings {
                replicas,
                sweeps,
                burn_in,
                master_seed: common.seed,
            },
            variance_temps,
            brownian,
        })
    }
}

impl Job for Bath {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let mut table = Table::new(["K", "t", "mean_magnetization", "stderr", "mean_field_value", "abs_error"]);
        let mut rows = Vec::new();
        for (ki, &k) in self.k_list.iter().enumerate() {
            for (ti, &t) in self.t_list.iter().enumerate() {
                let mf = mean_field_projection(t, &self.h, &self.target, self.sigma)?;
                let values = (0..self.settings.replicas)
                    .into_par_iter()
                    .map(|r| {
                        study_replica(k, t, &self.h, &self.target, self.sigma, &self.settings, study_stream_index(ki, ti, r))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let row = convergence_row(k, t, &values, mf);
                table.push(vec![
                    row.k.into(),
                    row.t.into(),
                    row.mean_magnetization.into(),
                    row.stderr.into(),
                    row.mean_field_value.into(),
                    row.abs_error.into(),
                ]);
                rows.push(row);
            }
        }
        out.csv("convergence.csv", &table)?;

        let s2 = self.sigma * self.sigma;
        let mut vt = Table::new(["t", "temperature", "value", "closed_form", "phase", "agrees"]);
        for &temp in &self.variance_temps {
            let v = pure_state_variance(temp / s2, self.sigma)?;
            let phase = match v.phase {
                Phase::HighTemperature => "high",
                Phase::LowTemperature => "low",
            };
            vt.push(vec![(temp / s2).into(), temp.into(), v.value.into(), v.closed_form.into(), phase.into(), v.agrees.into()]);
        }
        out.csv("variance.csv", &vt)?;

        if let Some((hc, schedule)) = &self.brownian {
            let x0 = vec![0.0; self.target.dim()];
            let mut rng = stream(self.settings.master_seed, u64::MAX);
            let traj = bath_brownian_integrate(&x0, schedule, *hc, &self.target, self.sigma, &mut rng)?;
            out.csv("trajectory.csv", &trajectory_table(&traj))?;
        }

        let worst = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
        out.json(
            "summary.json",
            &json!({
                "k_list": self.k_list,
                "t_list": self.t_list.iter().map(|&t| num(t)).collect::<Vec<_>>(),
                "h": self.h.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                "replicas": self.settings.replicas,
                "sweeps": self.settings.sweeps,
                "burn_in": self.settings.burn_in,
                "max_abs_error": num(worst),
            }),
        )?;
        Ok(format!("{} cells, max |⟨ȳ⟩ − m∞| = {worst:.4}", rows.len()))
    }
}
