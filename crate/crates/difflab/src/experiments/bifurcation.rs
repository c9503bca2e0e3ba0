use difflab_core::criticality::{critical_time, default_jump_tol, default_seeds, fixed_points_at, track_branches};
use difflab_core::numeric::log_grid;
use difflab_core::{Error, Target};
use rayon::prelude::*;
use serde_json::json;

use super::{at_least, num, positive, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::{Cell, Table};
use crate::targets::target_from_config;

pub struct Bifurcation {
    target: Target,
    sigma: f64,
    grid: Vec<f64>,
}

impl Bifurcation {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let target = target_from_config(cfg)?;
        let t_max = positive(cfg, "bifurcation.t_max", cfg.get_or("bifurcation.t_max", 4.0)?)?;
        let t_min = positive(cfg, "bifurcation.t_min", cfg.get_or("bifurcation.t_min", 0.05)?)?;
        if t_min >= t_max {
            return Err(cfg.invalid("bifurcation.t_min", "must be below bifurcation.t_max"));
        }
        let points = at_least(cfg, "bifurcation.points", cfg.get_or("bifurcation.points", 200usize)?, 2)?;
        Ok(Self {
            target,
            sigma: common.sigma,
            grid: log_grid(t_max, t_min, points),
        })
    }
}

impl Job for Bifurcation {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let seeds = default_seeds(&self.target);
        let per_time = self
            .grid
            .par_iter()
            .map(|&t| fixed_points_at(t, &self.target, self.sigma, &seeds))
            .collect::<Result<Vec<_>, _>>()?;
        let diagram = track_branches(self.grid.clone(), per_time, default_jump_tol(&self.target));
        let mut table = Table::with_vector(&["t", "branch_id", "stability", "leading_eigenvalue"], "m", self.target.dim());
        for (t, bp) in diagram.iter() {
            let mut row: Vec<Cell> = vec![
                t.into(),
                bp.branch_id.into(),
                bp.point.stability.label().into(),
                bp.point.leading_eigenvalue.into(),
            ];
            row.extend(bp.point.m.iter().map(|&v| Cell::Float(v)));
            table.push(row);
        }
        out.csv("branches.csv", &table)?;
        let t_c = match critical_time(&self.target, self.sigma) {
            Ok(t) => Some(t),
            Err(Error::NoBracket) => None,
            Err(e) => return Err(e.into()),
        };
        let counts: Vec<usize> = (0..diagram.times.len()).map(|k| diagram.branch_count(k)).collect();
        let branches = diagram.iter().map(|(_, bp)| bp.branch_id).max().map_or(0, |m| m + 1);
        out.json(
            "summary.json",
            &json!({
                "t_c": t_c.map(num),
                "grid_points": self.grid.len(),
                "branches": branches,
                "branch_counts": counts,
            }),
        )?;
        Ok(match t_c {
            Some(t) => format!("t_c = {t:.10}, {branches} branches"),
            None => format!("no critical time found, {branches} branches"),
        })
    }
}
