use difflab_core::dynamics::{forward_sample, Integrator, Schedule, Trajectory};
use difflab_core::linalg;
use difflab_core::rng::{stream, StreamRng};
use difflab_core::Target;
use rayon::prelude::*;
use serde_json::json;

use super::{at_least, frequencies, nearest_atom, num, schedule_from_config, Artifacts, Common, Job};
use crate::config::{Config, ConfigError};
use crate::error::RunError;
use crate::table::{Cell, Table};
use crate::targets::target_from_config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftForm {
    Score,
    FreeEnergy,
}

/// Reverse-time integration settings shared with the late-start runner.
pub struct Sampler {
    pub target: Target,
    pub sigma: f64,
    pub schedule: Schedule,
    pub integrator: Integrator,
    pub drift: DriftForm,
}

impl Sampler {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let target = target_from_config(cfg)?;
        let schedule = schedule_from_config(cfg, 4.0)?;
        let drift = match cfg.get_or("sample.drift", "score".to_string())?.as_str() {
            "score" => DriftForm::Score,
            "free_energy" => DriftForm::FreeEnergy,
            other => return Err(cfg.invalid("sample.drift", format!("expected score or free_energy, got '{other}'"))),
        };
        let noise_scale: f64 = cfg.get_or("sample.noise_scale", 1.0)?;
        if !(noise_scale.is_finite() && noise_scale >= 0.0) {
            return Err(cfg.invalid("sample.noise_scale", "must be non-negative"));
        }
        let denoise_final = cfg.get_or("sample.denoise", true)?;
        Ok(Self {
            target,
            sigma: common.sigma,
            schedule,
            integrator: Integrator {
                noise_scale,
                denoise_final,
            },
            drift,
        })
    }

    pub fn integrate(&self, x0: &[f64], schedule: &Schedule, rng: &mut StreamRng) -> Result<Trajectory, RunError> {
        let traj = match self.drift {
            DriftForm::Score => self.integrator.reverse(x0, schedule, &self.target, self.sigma, rng),
            DriftForm::FreeEnergy => self.integrator.free_energy_descent(x0, schedule, &self.target, self.sigma, rng),
        };
        Ok(traj?)
    }

    /// Full-noise run: `x(t_end)` drawn from the exact marginal, trajectory
    /// `i` on stream `(seed, i)`.
    pub fn full_noise(&self, seed: u64, i: u64) -> Result<Trajectory, RunError> {
        let mut rng = stream(seed, i);
        let y = self.target.sample(1, &mut rng).remove(0);
        let x0 = forward_sample(&y, self.schedule.t_end, self.sigma, &mut rng)?;
        self.integrate(&x0, &self.schedule, &mut rng)
    }
}

pub struct Sample {
    sampler: Sampler,
    seed: u64,
    trajectories: usize,
    save: usize,
}

impl Sample {
    pub fn from_config(cfg: &Config, common: Common) -> Result<Self, ConfigError> {
        let sampler = Sampler::from_config(cfg, common)?;
        let trajectories = at_least(cfg, "sample.trajectories", cfg.get_or("sample.trajectories", 1000usize)?, 1)?;
        let save: usize = cfg.get_or("sample.save_trajectories", 0)?;
        if save > trajectories {
            return Err(cfg.invalid("sample.save_trajectories", "cannot exceed sample.trajectories"));
        }
        Ok(Self {
            sampler,
            seed: common.seed,
            trajectories,
            save,
        })
    }
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::with_vector(&["t"], "x", traj.dim);
    for (time, x) in traj.iter() {
        let mut row = vec![Cell::Float(time)];
        row.extend(x.iter().map(|&v| Cell::Float(v)));
        t.push(row);
    }
    t
}

impl Job for Sample {
    fn run(&self, out: &mut Artifacts) -> Result<String, RunError> {
        let runs = (0..self.trajectories)
            .into_par_iter()
            .map(|i| {
                let traj = self.sampler.full_noise(self.seed, i as u64)?;
                let keep = (i < self.save).then(|| traj.clone());
                Ok((traj.terminal().to_vec(), keep))
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        let d = self.sampler.target.dim();
        let mut table = Table::with_vector(&["trajectory"], "x", d);
        for (i, (x, _)) in runs.iter().enumerate() {
            let mut row = vec![Cell::from(i)];
            row.extend(x.iter().map(|&v| Cell::Float(v)));
            table.push(row);
        }
        out.csv("terminal.csv", &table)?;
        for (i, (_, keep)) in runs.iter().enumerate() {
            if let Some(traj) = keep {
                out.csv(&format!("trajectory_{i}.csv"), &trajectory_table(traj))?;
            }
        }
        let terminal: Vec<Vec<f64>> = runs.into_iter().map(|(x, _)| x).collect();
        let target = &self.sampler.target;
        let summary = if let Ok(support) = target.enumerate_support() {
            let atoms: Vec<Vec<f64>> = support.iter().map(|a| a.point.clone()).collect();
            let freq = frequencies(&atoms, &terminal);
            let max_dist = terminal.iter().map(|x| nearest_atom(&atoms, x).1).fold(0.0, f64::max);
            let mut ft = Table::with_vector(&["atom"], "y", d);
            ft.header.extend(["weight".to_string(), "frequency".to_string()]);
            for (j, a) in support.iter().enumerate() {
                let mut row = vec![Cell::from(j)];
                row.extend(a.point.iter().map(|&v| Cell::Float(v)));
                row.extend([Cell::Float(a.log_weight.exp()), Cell::Float(freq[j])]);
                ft.push(row);
            }
            out.csv("frequencies.csv", &ft)?;
            json!({
                "trajectories": self.trajectories,
                "max_atom_distance": num(max_dist),
                "frequencies": freq.iter().map(|&f| num(f)).collect::<Vec<_>>(),
            })
        } else {
            let r = target.sphere_radius().unwrap_or(0.0);
            let dev = terminal.iter().map(|x| (linalg::norm(x) - r).abs()).fold(0.0, f64::max);
            json!({ "trajectories": self.trajectories, "max_radius_deviation": num(dev) })
        };
        out.json("summary.json", &summary)?;
        Ok(format!("{} trajectories", self.trajectories))
    }
}
