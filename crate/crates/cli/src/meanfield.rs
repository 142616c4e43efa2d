use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use turnpoint::meanfield::{locate_turning_point, price_curve, MeanFieldError, SolverOptions};
use turnpoint::numeric::grid;
use turnpoint::{CapacityDist, PriceCurve};

use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::{numerical, Outcome};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MeanfieldArgs {
    /// Inventory level v (0 for the hard-rectifier market).
    #[arg(long, default_value_t = 1e-3)]
    pub inventory: f64,
    /// Mean capacities as `min:max:steps`.
    #[arg(long, allow_hyphen_values = true)]
    pub capacity_grid: String,
    /// Space the grid logarithmically.
    #[arg(long)]
    pub log_grid: bool,
    /// Width of the rectangular capacity distribution.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// Convergence tolerance of the self-consistency solve.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct Landmark {
    /// `<Lambda> / v`, or the mean itself when `v = 0`.
    u: f64,
    mean_capacity: f64,
    phi_p: f64,
}

#[derive(Serialize)]
struct Landmarks {
    inventory: f64,
    points: usize,
    turning_point: Option<Landmark>,
    turning_point_note: Option<String>,
    quasi_point: Option<Landmark>,
    excess_point: Option<Landmark>,
    /// `phi_p` at the largest mean on the grid.
    plateau_phi_p: f64,
}

pub fn parse_grid(spec: &str, log: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, steps] = parts[..] else {
        bail!("--capacity-grid must look like min:max:steps, got {spec:?}");
    };
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad grid minimum {lo:?}"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad grid maximum {hi:?}"))?;
    let steps: usize = steps.trim().parse().with_context(|| format!("bad grid step count {steps:?}"))?;
    if steps < 3 {
        bail!("--capacity-grid needs at least 3 steps, got {steps}");
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        bail!("--capacity-grid needs finite min < max, got {lo} and {hi}");
    }
    if log && !(lo > 0.0) {
        bail!("--log-grid needs a positive minimum, got {lo}");
    }
    Ok(grid(lo, hi, steps, log))
}

fn landmark(curve: &PriceCurve, u: f64) -> Landmark {
    let scale = if curve.v > 0.0 { curve.v } else { 1.0 };
    let m = u * scale;
    // log-log interpolation of phi_p
    let k = curve.means.partition_point(|x| *x < m).clamp(1, curve.means.len() - 1);
    let (m0, m1) = (curve.means[k - 1], curve.means[k]);
    let f = (m.ln() - m0.ln()) / (m1.ln() - m0.ln());
    let phi_p = (curve.phi_p[k - 1].ln() + f * (curve.phi_p[k].ln() - curve.phi_p[k - 1].ln())).exp();
    Landmark {
        u,
        mean_capacity: m,
        phi_p,
    }
}

pub fn run(a: &MeanfieldArgs) -> Result<Outcome> {
    let means = parse_grid(&a.capacity_grid, a.log_grid)?;
    if !(a.inventory >= 0.0) {
        bail!("--inventory must be non-negative");
    }
    if !(a.width > 0.0) {
        bail!("--width must be positive");
    }
    let shape = CapacityDist::Rectangular {
        mean: means[0],
        width: a.width,
    };
    let opts = SolverOptions {
        tol: a.tol,
        ..SolverOptions::default()
    };
    let curve = price_curve(&shape, &means, a.inventory, &opts).map_err(|e| match e {
        MeanFieldError::GridPoint { index, mean, source } => {
            numerical(format!("mean-field solve failed at grid index {index} (mean capacity {mean}): {source}"))
        }
        MeanFieldError::Grid(msg) => anyhow::anyhow!("invalid grid: {msg}"),
        other => numerical(other.to_string()),
    })?;

    ensure_dir(&a.out_dir)?;
    let csv_path = a.out_dir.join("curve.csv");
    let json_path = a.out_dir.join("landmarks.json");
    let rows = (0..means.len()).map(|k| vec![num(means[k]), num(a.inventory), num(curve.phi_p[k]), num(curve.y[k]), num(curve.elasticity[k])]);
    write_csv(&csv_path, &["mean_capacity", "v", "phi_p", "y", "elasticity"], rows)?;

    let note = match curve.turning_point {
        Some(_) => None,
        None => locate_turning_point(&curve).err().map(|e| e.to_string()),
    };
    let landmarks = Landmarks {
        inventory: a.inventory,
        points: means.len(),
        turning_point: curve.turning_point.map(|u| landmark(&curve, u)),
        turning_point_note: note,
        quasi_point: curve.quasi_point.map(|u| landmark(&curve, u)),
        excess_point: curve.excess_point.map(|u| landmark(&curve, u)),
        plateau_phi_p: *curve.phi_p.last().unwrap(),
    };
    write_json(&json_path, &landmarks)?;
    Ok(Outcome {
        outputs: vec![csv_path, json_path],
        ..Outcome::default()
    })
}
