use difflab_core::criticality::fit_critical_exponents;
use difflab_core::Target;
use serde_json::json;

use super::{num, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::targets::target_from_config;

pub struct Exponents {
    target: Target,
    sigma: f64,
}

impl Exponents {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        Ok(Self {
            target: target_from_config(cfg)?,
            sigma: common.sigma,
        })
    }
}

impl Job for Exponents {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let ex = fit_critical_exponents(&self.target, self.sigma)?;
        let fits: Vec<_> = ex
            .fits()
            .iter()
            .map(|f| {
                json!({
                    "name": f.name.label(),
                    "value": num(f.value),
                    "stderr": num(f.stderr),
                    "window": [num(f.window.0), num(f.window.1)],
                    "r_squared": num(f.r_squared),
                })
            })
            .collect();
        out.json("exponents.json", &json!({ "t_c": num(ex.t_c), "fits": fits }))?;
        Ok(format!(
            "t_c = {:.10}, beta = {:.4}, delta = {:.4}, gamma = {:.4}",
            ex.t_c, ex.beta_order.value, ex.delta.value, ex.gamma.value
        ))
    }
}
