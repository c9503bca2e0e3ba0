//! `[target]` section: builds a core [`Target`].
//!
//! ```text
//! kind = two_deltas | four_deltas | discrete | hypersphere | ising
//! points = 1,0; 0,1        # discrete, inline rows
//! points_file = data.csv   # discrete, one point per row, optional `weight` column
//! weights = 0.5, 0.5       # discrete, optional
//! dim = 16                 # hypersphere, ising
//! radius = 1               # hypersphere
//! temperature = 1          # ising
//! j = -0.125               # ising, uniform off-diagonal coupling
//! coupling = 0,1; 1,0      # ising, full matrix (instead of j)
//! ```

use std::path::Path;

use difflab_core::linalg::Matrix;
use difflab_core::Target;

use crate::config::{Config, ConfigError};

pub fn target_from_config(cfg: &Config) -> Result<Target, ConfigError> {
    let kind: String = cfg.get("target.kind")?;
    let wrap = |key: &str, r: difflab_core::Result<Target>| r.map_err(|e| cfg.invalid(key, e.to_string()));
    match kind.as_str() {
        "two_deltas" => Ok(Target::two_deltas()),
        "four_deltas" => Ok(Target::four_deltas()),
        "discrete" => {
            let inline = cfg.opt_rows("target.points")?;
            let file: Option<String> = cfg.opt("target.points_file")?;
            let weights: Option<Vec<f64>> = cfg.opt_list("target.weights")?;
            let (points, file_weights, key) = match (inline, file) {
                (Some(p), None) => (p, None, "target.points"),
                (None, Some(f)) => {
                    let (p, w) = read_points(&cfg.resolve_path(&f)).map_err(|m| cfg.invalid("target.points_file", m))?;
                    (p, w, "target.points_file")
                }
                (Some(_), Some(_)) => return Err(cfg.invalid("target.points_file", "give either points or points_file, not both")),
                (None, None) => return Err(cfg.missing("target.points")),
            };
            let weights = match (weights, file_weights) {
                (Some(_), Some(_)) => return Err(cfg.invalid("target.weights", "weights given twice")),
                (w, fw) => w.or(fw),
            };
            match weights {
                Some(w) => wrap(key, Target::discrete_weighted(points, w)),
                None => wrap(key, Target::discrete(points)),
            }
        }
        "hypersphere" => {
            let dim = cfg.get("target.dim")?;
            let radius = cfg.get_or("target.radius", 1.0)?;
            wrap("target.dim", Target::hypersphere(dim, radius))
        }
        "ising" => {
            let dim: usize = cfg.get("target.dim")?;
            let temperature: f64 = cfg.get("target.temperature")?;
            let j: Option<f64> = cfg.opt("target.j")?;
            let rows = cfg.opt_rows("target.coupling")?;
            let coupling = match (j, rows) {
                (Some(j), None) => {
                    let mut w = vec![0.0; dim * dim];
                    for a in 0..dim {
                        for b in 0..dim {
                            if a != b {
                                w[a * dim + b] = j;
                            }
                        }
                    }
                    Matrix::from_row_major(dim, w).expect("square by construction")
                }
                (None, Some(rows)) => {
                    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                        return Err(cfg.invalid("target.coupling", format!("expected a {dim}x{dim} matrix")));
                    }
                    Matrix::from_row_major(dim, rows.concat()).expect("shape checked above")
                }
                _ => return Err(cfg.invalid("target.coupling", "give exactly one of target.j or target.coupling")),
            };
            wrap("target.coupling", Target::diffused_ising(coupling, temperature))
        }
        other => Err(cfg.invalid(
            "target.kind",
            format!("unknown kind '{other}' (two_deltas, four_deltas, discrete, hypersphere, ising)"),
        )),
    }
}

type PointsAndWeights = (Vec<Vec<f64>>, Option<Vec<f64>>);

fn read_points(path: &Path) -> Result<PointsAndWeights, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut weighted = false;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(mut row) => {
                if weighted {
                    weights.push(row.pop().ok_or("empty row")?);
                }
                points.push(row);
            }
            Err(_) if i == 0 => weighted = rec.iter().next_back() == Some("weight"),
            Err(_) => return Err(format!("{}: row {} is not numeric", path.display(), i + 1)),
        }
    }
    Ok((points, weighted.then_some(weights)))
}
