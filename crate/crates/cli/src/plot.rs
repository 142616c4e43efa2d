use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use turnpoint::elasticity::{default_model_grid, model_elasticity_curve, ModelCurve};
use turnpoint::plot::{render, Chart, HeatMap, Marker, Series};

use crate::analyze::FitReport;
use crate::output::read_numeric_csv;
use crate::{numerical, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// prices.csv from `simulate`: price distribution per capacity bin.
    Prices,
    /// curve.csv from `meanfield`: purchasing price against mean capacity.
    Curve,
    /// elasticity.csv from `analyze`.
    Elasticity,
    /// Several elasticity.csv files in rescaled coordinates.
    Composite,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Input CSV; repeat for composite plots.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// fit.json for each input, in order; defaults to fit.json next to each input.
    #[arg(long)]
    pub fit: Vec<PathBuf>,
    /// Draw the rescaled model elasticity curve.
    #[arg(long)]
    pub overlay_model: bool,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub output: PathBuf,
}

const PRICES: [&str; 7] = ["capacity_bin", "capacity_lo", "capacity_hi", "price_bin", "price_lo", "price_hi", "count"];
const CURVE: [&str; 5] = ["mean_capacity", "v", "phi_p", "y", "elasticity"];
const ELASTICITY: [&str; 4] = ["sur_mean", "elasticity", "stderr", "n"];

pub fn run(a: &PlotArgs) -> Result<Outcome> {
    if a.kind != PlotKind::Composite && a.input.len() != 1 {
        bail!("--kind {:?} takes exactly one --input", a.kind);
    }
    if a.overlay_model && matches!(a.kind, PlotKind::Prices | PlotKind::Curve) {
        bail!("--overlay-model applies to elasticity and composite plots");
    }
    if !a.fit.is_empty() && a.fit.len() != a.input.len() {
        bail!("give one --fit per --input ({} inputs, {} fits)", a.input.len(), a.fit.len());
    }
    let mut inputs = a.input.clone();
    let chart = match a.kind {
        PlotKind::Prices => prices_chart(&a.input[0])?,
        PlotKind::Curve => curve_chart(&a.input[0])?,
        PlotKind::Elasticity | PlotKind::Composite => {
            let fits = fit_paths(a);
            let chart = if a.kind == PlotKind::Elasticity {
                elasticity_chart(&a.input[0], a.overlay_model.then(|| fits[0].as_path()))?
            } else {
                composite_chart(&a.input, &fits, a.overlay_model)?
            };
            if a.overlay_model || a.kind == PlotKind::Composite {
                inputs.extend(fits);
            }
            chart
        }
    };
    let chart = match &a.title {
        Some(t) => Chart { title: t.clone(), ..chart },
        None => chart,
    };
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&a.output, render(&chart)).with_context(|| format!("writing {}", a.output.display()))?;
    Ok(Outcome {
        inputs,
        outputs: vec![a.output.clone()],
        ..Outcome::default()
    })
}

fn fit_paths(a: &PlotArgs) -> Vec<PathBuf> {
    if !a.fit.is_empty() {
        return a.fit.clone();
    }
    a.input.iter().map(|p| p.with_file_name("fit.json")).collect()
}

fn read_fit(path: &Path) -> Result<(FitReport, f64, f64)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: FitReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(fit) = &report.fit else {
        bail!("{} has no fitted scales; run analyze with --fit", path.display());
    };
    let (s, e) = (fit.sur_scale, fit.elasticity_scale);
    Ok((report, s, e))
}

fn model_for(report: &FitReport) -> Result<ModelCurve> {
    model_elasticity_curve(report.model_inventory, &default_model_grid()).map_err(|e| numerical(format!("model curve: {e}")))
}

fn prices_chart(path: &Path) -> Result<Chart> {
    let rows = read_numeric_csv(path, &PRICES)?;
    let chart = Chart::new("Equilibrium price by capacity", "capacity", "price");
    if rows.is_empty() {
        return Ok(chart);
    }
    let nc = rows.iter().map(|r| r[0] as usize).max().unwrap() + 1;
    let np = rows.iter().map(|r| r[3] as usize).max().unwrap() + 1;
    let mut x_edges = vec![f64::NAN; nc + 1];
    let mut y_edges = vec![f64::NAN; np + 1];
    let mut counts = vec![vec![0.0; np]; nc];
    for r in &rows {
        let (i, j) = (r[0] as usize, r[3] as usize);
        x_edges[i] = r[1];
        x_edges[i + 1] = r[2];
        y_edges[j] = r[4];
        y_edges[j + 1] = r[5];
        counts[i][j] = r[6];
    }
    if x_edges.iter().chain(&y_edges).any(|e| !e.is_finite()) {
        bail!("{}: histogram rows do not cover a full grid", path.display());
    }
    // conditional distribution within each capacity bin
    for col in &mut counts {
        let total: f64 = col.iter().sum();
        if total > 0.0 {
            col.iter_mut().for_each(|c| *c /= total);
        }
    }
    Ok(chart.with_heat(HeatMap { x_edges, y_edges, counts }))
}

fn curve_chart(path: &Path) -> Result<Chart> {
    let rows = read_numeric_csv(path, &CURVE)?;
    let v = rows.first().map_or(0.0, |r| r[1]);
    let scale = if v > 0.0 { v } else { 1.0 };
    let x_label = if v > 0.0 { "mean capacity / v" } else { "mean capacity" };
    let xs = rows.iter().map(|r| r[0] / scale).collect();
    let ys = rows.iter().map(|r| r[2]).collect();
    Ok(Chart::new("Purchasing price against mean capacity", x_label, "phi_p")
        .log_x(true)
        .with_series(Series::line(format!("v = {v}"), xs, ys)))
}

fn elasticity_chart(path: &Path, fit: Option<&Path>) -> Result<Chart> {
    let rows = read_numeric_csv(path, &ELASTICITY)?;
    let mut chart = Chart::new("SUR elasticity of price", "stocks-to-use ratio", "elasticity").with_series(Series::points(
        "data",
        rows.iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| r[1]).collect(),
        Marker::Circle,
    ));
    if let Some(fit) = fit {
        let (report, s, e) = read_fit(fit)?;
        let model = model_for(&report)?;
        chart = chart.with_series(Series::line(
            "model",
            model.u.iter().map(|u| u * s).collect(),
            model.elasticity.iter().map(|m| m * e).collect(),
        ));
    }
    Ok(chart)
}

fn composite_chart(inputs: &[PathBuf], fits: &[PathBuf], overlay: bool) -> Result<Chart> {
    let mut chart = Chart::new("Rescaled elasticity", "SUR / sur_scale", "elasticity / elasticity_scale").log_x(true);
    let mut first = None;
    for (k, (input, fit)) in inputs.iter().zip(fits).enumerate() {
        let rows = read_numeric_csv(input, &ELASTICITY)?;
        let (report, s, e) = read_fit(fit)?;
        first.get_or_insert(report);
        chart = chart.with_series(Series::points(
            label_of(input),
            rows.iter().map(|r| r[0] / s).collect(),
            rows.iter().map(|r| r[1] / e).collect(),
            Marker::nth(k),
        ));
    }
    if overlay {
        if let Some(report) = first {
            let model = model_for(&report)?;
            chart = chart.with_series(Series::line("model", model.u.clone(), model.elasticity.clone()));
        }
    }
    Ok(chart)
}

/// Name of the directory holding the file, or the file stem for bare names.
fn label_of(path: &Path) -> String {
    path.parent()
        .and_then(|d| d.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
