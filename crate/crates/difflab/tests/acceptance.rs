//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::path::Path;
use std::time::Instant;

use difflab::{run_experiment, Config, Experiment};
use difflab_core::bath::{
    convergence_row, exact_gibbs, mean_field_projection, pure_state_variance, study_replica, study_stream_index,
    BathChain, StudySettings,
};
use difflab_core::criticality::{critical_time, default_seeds, fit_critical_exponents, fixed_points_at, Stability};
use difflab_core::dynamics::{forward_sample, late_start_init, Integrator, Schedule, Spacing};
use difflab_core::hopfield::{equivalence_check, retrieve, PatternSet};
use difflab_core::linalg::{self, Matrix};
use difflab_core::numeric::{log_grid, mean_stderr};
use difflab_core::rem::{beta_c, condensation_time, expected_participation_ratio, replica_curve, RemParams};
use difflab_core::rng::stream;
use difflab_core::thermo::{self, ThermoState};
use difflab_core::Target;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn ising8() -> Target {
    let d = 8;
    let mut w = vec![-1.0 / d as f64; d * d];
    for i in 0..d {
        w[i * d + i] = 0.0;
    }
    Target::diffused_ising(Matrix::from_row_major(d, w).unwrap(), 1.0).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn nearest(atoms: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    atoms
        .iter()
        .enumerate()
        .map(|(j, a)| (j, linalg::dist(a, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn atoms_of(target: &Target) -> Vec<Vec<f64>> {
    target.enumerate_support().unwrap().into_iter().map(|a| a.point).collect()
}

/// Central-difference gradient of `log p_t`.
fn fd_log_marginal(x: &[f64], t: f64, target: &Target) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let lp = thermo::log_marginal(&ThermoState::new(xp, t, 1.0).unwrap(), target).unwrap();
            let lm = thermo::log_marginal(&ThermoState::new(xm, t, 1.0).unwrap(), target).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let mut worst: f64 = 0.0;
    for (ti, target) in [Target::two_deltas(), Target::four_deltas(), ising8()].iter().enumerate() {
        for i in 0..200 {
            let mut rng = stream(101 + ti as u64, i);
            let t = 0.05 * (80.0f64).powf(rng.random::<f64>());
            let y = target.sample(1, &mut rng).remove(0);
            let x = forward_sample(&y, t, 1.0, &mut rng).unwrap();
            let s = thermo::score(&ThermoState::new(x.clone(), t, 1.0).unwrap(), target).unwrap();
            worst = worst.max(max_abs_diff(&s, &fd_log_marginal(&x, t, target)));
        }
    }
    verdict(worst < 1e-5, format!("max |score - FD grad log p_t| = {worst:.3e} (tol 1e-5)"))
}

fn criterion_2() -> Verdict {
    let targets = [Target::two_deltas(), Target::four_deltas(), Target::hypersphere(3, 1.0).unwrap(), ising8()];
    let mut worst: f64 = 0.0;
    let integrator = Integrator {
        noise_scale: 0.0,
        denoise_final: false,
    };
    for i in 0..1000u64 {
        let target = &targets[(i % 4) as usize];
        let mut rng = stream(201, i);
        let t = 0.05 * (80.0f64).powf(rng.random::<f64>());
        let sigma = 0.5 + rng.random::<f64>();
        let x: Vec<f64> = (0..target.dim()).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        // Drift read off one noiseless Euler step of the reverse SDE.
        let dt = 0.25 * t;
        let schedule = Schedule::new(t, t - 2.0 * dt, 2, Spacing::Linear).unwrap();
        let traj = integrator.reverse(&x, &schedule, target, sigma, &mut rng).unwrap();
        let v_sde: Vec<f64> = traj.state(1).iter().zip(&x).map(|(a, b)| (a - b) / (sigma * sigma * dt)).collect();
        let state = ThermoState::new(x, t, sigma).unwrap();
        let b = state.beta();
        let grad = thermo::regularized_free_energy_gradient(&state, target).unwrap();
        let v_fe: Vec<f64> = grad.iter().map(|g| -b * g).collect();
        let scale = v_fe.iter().map(|v| v.abs()).fold(1.0, f64::max);
        worst = worst.max(max_abs_diff(&v_sde, &v_fe) / scale);
    }
    verdict(worst < 1e-12, format!("max scaled |drift + beta grad F~| = {worst:.3e} over 1000 states (tol 1e-12)"))
}

fn criterion_3() -> Verdict {
    let tc2 = critical_time(&Target::two_deltas(), 1.0).unwrap();
    let tcs = critical_time(&Target::hypersphere(16, 1.0).unwrap(), 1.0).unwrap();
    let (e2, es) = ((tc2 - 1.0).abs(), (tcs - 1.0 / 16.0).abs());
    verdict(
        e2 < 1e-6 && es < 1e-6,
        format!("two deltas t_c = {tc2:.10} (err {e2:.1e}), hypersphere d=16 t_c = {tcs:.10} (err {es:.1e}), tol 1e-6"),
    )
}

fn criterion_4() -> Verdict {
    let target = Target::two_deltas();
    let grid = log_grid(4.0, 0.05, 200);
    let seeds = default_seeds(&target);
    let per_t: Vec<_> = grid
        .par_iter()
        .map(|&t| fixed_points_at(t, &target, 1.0, &seeds).unwrap())
        .collect();
    let mut bad = Vec::new();
    let mut checked = 0;
    for (&t, fps) in grid.iter().zip(&per_t) {
        if (t - 1.0).abs() <= 1e-3 {
            continue;
        }
        checked += 1;
        let ok = if t > 1.0 {
            fps.len() == 1 && fps[0].m[0].abs() < 1e-9 && fps[0].stability == Stability::Stable
        } else {
            fps.len() == 3
                && fps[1].m[0].abs() < 1e-9
                && fps[1].stability == Stability::Unstable
                && fps[0].m[0] < 0.0
                && fps[2].m[0] > 0.0
                && fps[0].stability == Stability::Stable
                && fps[2].stability == Stability::Stable
        };
        if !ok {
            bad.push(t);
        }
    }
    verdict(
        bad.is_empty(),
        format!("{checked} grid points checked, {} with wrong count or labels {:?}", bad.len(), bad),
    )
}

fn criterion_5() -> Verdict {
    match fit_critical_exponents(&Target::two_deltas(), 1.0) {
        Ok(ex) => {
            let ok = (ex.beta_order.value - 0.5).abs() < 0.02
                && (ex.delta.value - 3.0).abs() < 0.1
                && (ex.gamma.value - 1.0).abs() < 0.05
                && ex.fits().iter().all(|f| f.r_squared > 0.99);
            let r2 = ex.fits().iter().map(|f| f.r_squared).fold(1.0, f64::min);
            verdict(
                ok,
                format!(
                    "beta = {:.4} (0.5 +- 0.02), delta = {:.4} (3 +- 0.1), gamma = {:.4} (1 +- 0.05), min r2 = {r2:.5}",
                    ex.beta_order.value, ex.delta.value, ex.gamma.value
                ),
            )
        }
        Err(e) => verdict(false, format!("fit failed: {e}")),
    }
}

/// Terminal states of `n` exact-score reverse runs from the full-noise
/// marginal at `t = 4`, 2000 log-spaced steps.
fn terminal_states(target: &Target, n: u64, seed: u64) -> Vec<Vec<f64>> {
    let schedule = Schedule::log(4.0, 1e-3, 2000).unwrap();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let y = target.sample(1, &mut rng).remove(0);
            let x0 = forward_sample(&y, schedule.t_end, 1.0, &mut rng).unwrap();
            Integrator::default().reverse(&x0, &schedule, target, 1.0, &mut rng).unwrap().terminal().to_vec()
        })
        .collect()
}

fn atom_frequencies(atoms: &[Vec<f64>], xs: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut counts = vec![0usize; atoms.len()];
    let mut max_dist: f64 = 0.0;
    for x in xs {
        let (j, d) = nearest(atoms, x);
        counts[j] += 1;
        max_dist = max_dist.max(d);
    }
    (counts.iter().map(|&c| c as f64 / xs.len() as f64).collect(), max_dist)
}

fn criterion_6() -> Verdict {
    let two = Target::two_deltas();
    let xs = terminal_states(&two, 10_000, 601);
    let (f2, d2) = atom_frequencies(&atoms_of(&two), &xs);
    let four = Target::four_deltas();
    let xs = terminal_states(&four, 10_000, 602);
    let (f4, _) = atom_frequencies(&atoms_of(&four), &xs);
    let dev4 = f4.iter().map(|f| (f - 0.25).abs()).fold(0.0, f64::max);
    let ok = (f2[1] - 0.5).abs() < 0.015 && d2 < 0.05 && dev4 < 0.02;
    verdict(
        ok,
        format!(
            "two deltas P(+1) = {:.4} (0.5 +- 0.015), max distance to atom {d2:.2e} (< 0.05); four deltas max |f - 0.25| = {dev4:.4} (< 0.02)",
            f2[1]
        ),
    )
}

fn criterion_7() -> Verdict {
    let target = Target::four_deltas();
    let atoms = atoms_of(&target);
    let t_start = 3.0 * critical_time(&target, 1.0).unwrap();
    let full = terminal_states(&target, 10_000, 701);
    let late_schedule = Schedule::log(t_start, 1e-3, 2000).unwrap();
    let late: Vec<Vec<f64>> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(702, i);
            let x0 = late_start_init(t_start, &target, 1.0, &mut rng, 1).unwrap().remove(0);
            Integrator::default().reverse(&x0, &late_schedule, &target, 1.0, &mut rng).unwrap().terminal().to_vec()
        })
        .collect();
    let (ff, _) = atom_frequencies(&atoms, &full);
    let (fl, _) = atom_frequencies(&atoms, &late);
    let diff = ff.iter().zip(&fl).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(diff < 0.02, format!("t_start = {t_start:.4}, max |f_full - f_late| = {diff:.4} (< 0.02)"))
}

fn criterion_8() -> Verdict {
    let params = RemParams::new(16, 128, 1.0).unwrap();
    let bc = beta_c();
    // t at which β̃ = ν_eff β(t) ‖x‖ hits the requested value, ‖x‖ = σ = 1.
    let t_at = |bt: f64| params.effective_nu() / bt;
    let grid = [t_at(2.0 * bc), t_at(0.5 * bc)];
    let curves: Vec<Vec<f64>> = (0..32u64)
        .into_par_iter()
        .map(|i| replica_curve(&params, 1.0, 1.0, &grid, &mut stream(801, i)))
        .collect();
    let col = |k: usize| mean_stderr(&curves.iter().map(|c| c[k]).collect::<Vec<_>>());
    let ((y_hi, se_hi), (y_lo, _)) = (col(0), col(1));
    let e_hi = (y_hi - expected_participation_ratio(2.0 * bc)).abs();
    let e_lo = (y_lo - expected_participation_ratio(0.5 * bc)).abs();
    let mut x = vec![0.0; 128];
    x[0] = 1.0;
    let tc = condensation_time(&x, 1.0, 1.0).unwrap();
    let closed = 1.0 / (2.0 * 2f64.ln().sqrt());
    let ok = e_hi < 0.05 && e_lo < 0.03 && (tc - closed).abs() <= 1e-15;
    verdict(
        ok,
        format!(
            "<Y>(2 beta_c) = {y_hi:.4} +- {se_hi:.4} (|err| {e_hi:.4} < 0.05), <Y>(beta_c/2) = {y_lo:.2e} (< 0.03), t_cond = {tc:.6} vs {closed:.6}"
        ),
    )
}

fn criterion_9() -> Verdict {
    let target = Target::two_deltas();
    let h = [0.01];
    let settings = StudySettings {
        replicas: 16,
        sweeps: 4000,
        burn_in: 500,
        master_seed: 901,
    };
    let t = 0.5;
    let mf = mean_field_projection(t, &h, &target, 1.0).unwrap();
    let rows: Vec<_> = [32usize, 128, 512]
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let values: Vec<f64> = (0..settings.replicas)
                .into_par_iter()
                .map(|r| study_replica(k, t, &h, &target, 1.0, &settings, study_stream_index(ki, 0, r)).unwrap())
                .collect();
            convergence_row(k, t, &values, mf)
        })
        .collect();
    let errs: Vec<f64> = rows.iter().map(|r| (r.mean_magnetization - 0.957504).abs()).collect();
    // Convergence is measured against the mean-field value at the applied
    // field, which is where the K → ∞ limit lies.
    let monotone = (0..2).all(|i| {
        rows[i + 1].abs_error <= rows[i].abs_error + 2.0 * rows[i].stderr.hypot(rows[i + 1].stderr)
    });
    let var_err = log_grid(1.2, 5.0, 20)
        .iter()
        .map(|&temp| {
            let v = pure_state_variance(temp, 1.0).unwrap();
            (v.value - 1.0 / (1.0 - 1.0 / temp)).abs()
        })
        .fold(0.0, f64::max);
    let ok = errs[2] < 0.03 && monotone && var_err < 1e-6;
    verdict(
        ok,
        format!(
            "K=32,128,512 |<y> - 0.957504| = {:.4}, {:.4}, {:.4} (K=512 < 0.03); |<y> - m(h)| = {:.2e}, {:.2e}, {:.2e} non-increasing: {monotone}; variance max err {var_err:.2e} (< 1e-6)",
            errs[0], errs[1], errs[2], rows[0].abs_error, rows[1].abs_error, rows[2].abs_error
        ),
    )
}

fn criterion_10() -> Verdict {
    let target = Target::two_deltas();
    let (k, t, h) = (8, 1.5, [0.1]);
    let exact = exact_gibbs(&target, k, t, 1.0, &h).unwrap();
    let mut rng = stream(1001, 0);
    let mut chain = BathChain::new(&target, k, t, 1.0, &h, &mut rng).unwrap();
    let mut counts = vec![0u64; exact.len()];
    let sweeps = 1_000_000;
    for _ in 0..sweeps {
        chain.sweep(&mut rng);
        counts[chain.config_index()] += 1;
    }
    let tv = 0.5 * counts.iter().zip(&exact).map(|(&c, p)| (c as f64 / sweeps as f64 - p).abs()).sum::<f64>();
    verdict(tv < 0.02, format!("K=8 TV distance to exact Gibbs after 1e6 sweeps = {tv:.4} (< 0.02)"))
}

fn criterion_11() -> Verdict {
    let mut rng = stream(1101, 0);
    let four = PatternSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]], 2.0).unwrap();
    let raw: Vec<Vec<f64>> = (0..4).map(|_| (0..16).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let high = PatternSet::new(raw, 64.0).unwrap();
    let mut dev: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for (ps, t) in [(&four, 0.5), (&high, 1.0 / 64.0)] {
        match equivalence_check(ps, t, 1.0, 100, &mut rng) {
            Ok(r) => {
                dev = dev.max(r.max_gradient_deviation);
                spread = spread.max(r.offset_spread);
            }
            Err(e) => return verdict(false, format!("equivalence check failed: {e}")),
        }
    }
    let mut hits = 0;
    for i in 0..100 {
        let k = i % 4;
        let x0: Vec<f64> = high.pattern(k).iter().map(|y| y + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        if matches!(retrieve(&x0, &high, 1.0, 1000), Ok(r) if r.index == Some(k)) {
            hits += 1;
        }
    }
    let ok = dev < 1e-8 && spread < 1e-10 && hits == 100;
    verdict(
        ok,
        format!("max gradient deviation {dev:.2e} (< 1e-8), offset spread {spread:.2e} (< 1e-10), retrieval {hits}/100"),
    )
}

/// Small overrides so the rerun check stays fast.
fn quick_overrides(exp: Experiment) -> &'static [&'static str] {
    match exp {
        Experiment::Bifurcation => &["bifurcation.points=40"],
        Experiment::Sample => &["sample.trajectories=200", "schedule.steps=200", "sample.save_trajectories=2"],
        Experiment::Latestart => &["latestart.trajectories=200", "schedule.steps=200"],
        Experiment::Rem => &["rem.m=10", "rem.replicas=8"],
        Experiment::Bath => &["bath.k_list=8,32", "bath.replicas=8", "bath.sweeps=200", "bath.burn_in=20"],
        Experiment::Hopfield => &["hopfield.probes=20", "hopfield.equivalence_probes=20"],
        Experiment::ScoreCheck => &["score-check.probes=20"],
        Experiment::Exponents => &[],
    }
}

fn criterion_12() -> Verdict {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let dir = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut overhead: f64 = 0.0;
    for exp in Experiment::ALL {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let mut cfg = Config::load(&configs.join(format!("{}.cfg", exp.name()))).unwrap();
            for s in quick_overrides(exp) {
                cfg.set(s).unwrap();
            }
            let out = dir.path().join(format!("{}-{rep}", exp.name()));
            let start = Instant::now();
            let outcome = match run_experiment(exp, &cfg, &out) {
                Ok(o) => o,
                Err(e) => return verdict(false, format!("{} failed: {e}", exp.name())),
            };
            let total = start.elapsed().as_secs_f64();
            let manifest: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
            overhead = overhead.max(total - manifest["wall_time_s"].as_f64().unwrap());
            let files: Vec<(String, Vec<u8>)> = outcome
                .artifacts
                .iter()
                .map(|name| (name.clone(), std::fs::read(out.join(name)).unwrap()))
                .collect();
            outputs.push(files);
        }
        if outputs[0] != outputs[1] {
            mismatches.push(exp.name());
        }
    }
    verdict(
        mismatches.is_empty() && overhead < 1.0,
        format!("8 experiments rerun, byte mismatches: {mismatches:?}, max overhead {overhead:.3} s (< 1 s)"),
    )
}

fn main() {
    type Criterion = (u32, &'static str, f64, fn() -> Verdict);
    let criteria: [Criterion; 12] = [
        (1, "score identity", 30.0, criterion_1),
        (2, "drift identity", 5.0, criterion_2),
        (3, "critical time", 10.0, criterion_3),
        (4, "bifurcation diagram", 30.0, criterion_4),
        (5, "critical exponents", 60.0, criterion_5),
        (6, "sampling correctness", 180.0, criterion_6),
        (7, "late start", 180.0, criterion_7),
        (8, "REM condensation", 120.0, criterion_8),
        (9, "bath convergence", 240.0, criterion_9),
        (10, "detailed balance", 120.0, criterion_10),
        (11, "Hopfield equivalence", 30.0, criterion_11),
        (12, "reproducibility", f64::INFINITY, criterion_12),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let pass = v.pass && secs < budget;
        if !pass {
            failed += 1;
        }
        let budget = if budget.is_finite() { format!(" / {budget:.0} s") } else { String::new() };
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
