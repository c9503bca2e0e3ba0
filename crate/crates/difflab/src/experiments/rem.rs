use difflab_core::rem::{assemble_report, beta_c, condensation_time, default_t_grid, replica_curve, RemParams, MAX_M, MIN_M, MIN_REPLICAS};
use difflab_core::rng::stream;
use rayon::prelude::*;
use serde_json::json;

use super::{at_least, num, positive, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::Table;

pub struct Rem {
    params: RemParams,
    sigma: f64,
    x_norm: f64,
    replicas: usize,
    seed: u64,
    t_grid: Option<Vec<f64>>,
}

impl Rem {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let m: u32 = cfg.get_or("rem.m", 16)?;
        if !(MIN_M..=MAX_M).contains(&m) {
            return Err(cfg.invalid("rem.m", format!("must lie in [{MIN_M}, {MAX_M}]")));
        }
        let d = at_least(cfg, "rem.d", cfg.get_or("rem.d", 128usize)?, 2)?;
        let nu = positive(cfg, "rem.nu", cfg.get_or("rem.nu", 1.0)?)?;
        let x_norm = positive(cfg, "rem.x_norm", cfg.get_or("rem.x_norm", 1.0)?)?;
        let replicas = at_least(cfg, "rem.replicas", cfg.get_or("rem.replicas", 32usize)?, MIN_REPLICAS)?;
        let t_grid: Option<Vec<f64>> = cfg.opt_list("rem.t_grid")?;
        if let Some(g) = &t_grid {
            if g.is_empty() || g.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(cfg.invalid("rem.t_grid", "times must be positive"));
            }
        }
        let params = RemParams::new(m, d, nu).map_err(|e| cfg.invalid("rem.m", e.to_string()))?;
        Ok(Self {
            params,
            sigma: common.sigma,
            x_norm,
            replicas,
            seed: common.seed,
            t_grid,
        })
    }
}

impl Job for Rem {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let p = &self.params;
        let mut x = vec![0.0; p.d];
        x[0] = self.x_norm;
        let t_cond_eff = condensation_time(&x, p.effective_nu(), self.sigma)?;
        let grid = self.t_grid.clone().unwrap_or_else(|| default_t_grid(t_cond_eff));
        let curves: Vec<Vec<f64>> = (0..self.replicas as u64)
            .into_par_iter()
            .map(|i| replica_curve(p, self.x_norm, self.sigma, &grid, &mut stream(self.seed, i)))
            .collect();
        let report = assemble_report(p, self.x_norm, self.sigma, &grid, &curves)?;
        let mut table = Table::new(["t", "beta_tilde", "Y_mean", "Y_stderr", "Y_theory", "n_eff"]);
        for k in 0..grid.len() {
            table.push(vec![
                report.times[k].into(),
                report.beta_tilde[k].into(),
                report.y_mean[k].into(),
                report.y_stderr[k].into(),
                report.y_theory[k].into(),
                report.n_eff[k].into(),
            ]);
        }
        out.csv("condensation.csv", &table)?;
        out.json(
            "summary.json",
            &json!({
                "t_cond": num(report.t_cond),
                "t_cond_closed_form": num(condensation_time(&x, p.nu, self.sigma)?),
                "t_collapse": report.t_collapse.map(num),
                "beta_c": num(beta_c()),
                "m": p.m,
                "n": p.n(),
                "d": p.d,
                "nu": num(p.nu),
                "nu_eff": num(p.effective_nu()),
                "radius": num(p.radius()),
                "x_norm": num(self.x_norm),
                "sigma": num(self.sigma),
                "replicas": self.replicas,
            }),
        )?;
        Ok(format!("t_cond = {:.6}, {} replicas", report.t_cond, self.replicas))
    }
}
