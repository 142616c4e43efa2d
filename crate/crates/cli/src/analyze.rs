use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use turnpoint::elasticity::{
    default_model_grid, fit_rescale, mask_above_yield, model_elasticity_curve, sorted_points, windowed_elasticity, yield_report,
    ElasticityError, YieldPoint,
};
use turnpoint::ingest::{apply_deflator, parse_series, DeflatorTable, ParseOptions, RawTable};
use turnpoint::Period;

use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::{numerical, Outcome};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// CSV with `period,price,sur` columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Consecutive points per regression window.
    #[arg(long, default_value_t = 11)]
    pub window: usize,
    /// Fit the SUR and elasticity scales of the model curve.
    #[arg(long)]
    pub fit: bool,
    /// Leave points below the yield point out of the fit.
    #[arg(long)]
    pub mask_yield: bool,
    /// Fit with equal weights instead of inverse slope variances.
    #[arg(long)]
    pub unweighted: bool,
    /// CSV with `period,index` columns used to convert to constant currency.
    #[arg(long, requires = "base")]
    pub deflator: Option<PathBuf>,
    /// Base period of the deflator, e.g. 1998 or 2010Q1.
    #[arg(long, requires = "deflator")]
    pub base: Option<String>,
    #[arg(long)]
    pub allow_negative_sur: bool,
    /// Inventory level of the model curve used for the fit.
    #[arg(long, default_value_t = 1e-3)]
    pub model_inventory: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct FitSummary {
    pub sur_scale: f64,
    pub elasticity_scale: f64,
    pub rms_error: f64,
    pub weighted: bool,
    pub fitted_points: usize,
}

#[derive(Serialize, Deserialize)]
pub struct FitReport {
    pub source: String,
    pub records: usize,
    pub window: usize,
    pub curve_points: usize,
    pub skipped_windows: usize,
    pub model_inventory: f64,
    pub model_turning_point_u: Option<f64>,
    pub fit: Option<FitSummary>,
    pub turning_point_sur: Option<f64>,
    pub yield_point: Option<YieldPoint>,
    pub relative_yield_elasticity: Option<f64>,
    pub elastic_regime_mean_price: Option<f64>,
    pub in_typical_range: Option<bool>,
}

pub fn run(a: &AnalyzeArgs) -> Result<Outcome> {
    let options = ParseOptions {
        allow_negative_sur: a.allow_negative_sur,
        ..ParseOptions::default()
    };
    let mut series = parse_series(&a.input, options)?;
    let mut inputs = vec![a.input.clone()];
    if let (Some(path), Some(base)) = (&a.deflator, &a.base) {
        let base: Period = base.parse()?;
        let table = DeflatorTable::from_table(&RawTable::from_path(path)?, base)?;
        series = apply_deflator(&series, &table)?;
        inputs.push(path.clone());
    }
    let points = sorted_points(&series)?;
    let curve = windowed_elasticity(&series.name, &points, a.window)?;

    ensure_dir(&a.out_dir)?;
    let csv_path = a.out_dir.join("elasticity.csv");
    let rows = curve
        .points
        .iter()
        .map(|p| vec![num(p.sur_mean), num(p.elasticity), num(p.slope_stderr), p.n.to_string()]);
    write_csv(&csv_path, &["sur_mean", "elasticity", "stderr", "n"], rows)?;

    let mut report = FitReport {
        source: series.name.clone(),
        records: series.len(),
        window: a.window,
        curve_points: curve.points.len(),
        skipped_windows: curve.skipped_windows,
        model_inventory: a.model_inventory,
        model_turning_point_u: None,
        fit: None,
        turning_point_sur: None,
        yield_point: None,
        relative_yield_elasticity: None,
        elastic_regime_mean_price: None,
        in_typical_range: None,
    };
    let mut failure = None;
    if a.fit {
        if !(a.model_inventory > 0.0) {
            bail!("--model-inventory must be positive");
        }
        let model = model_elasticity_curve(a.model_inventory, &default_model_grid()).map_err(|e| numerical(format!("model curve: {e}")))?;
        report.model_turning_point_u = Some(model.turning_point);
        let mask = a.mask_yield.then(|| mask_above_yield(&curve));
        match fit_rescale(&curve, &model, mask.as_deref(), !a.unweighted) {
            Ok(fit) => {
                report.turning_point_sur = Some(fit.turning_sur(&model));
                report.fit = Some(FitSummary {
                    sur_scale: fit.sur_scale,
                    elasticity_scale: fit.elasticity_scale,
                    rms_error: fit.rms_error,
                    weighted: fit.weighted,
                    fitted_points: fit.fit_mask.iter().filter(|m| **m).count(),
                });
            }
            Err(e @ ElasticityError::TooFewPoints { .. }) => bail!("cannot fit: {e}"),
            Err(e) => failure = Some(format!("rescale fit failed: {e}")),
        }
    }
    let y = yield_report(&series, &curve, report.turning_point_sur);
    report.yield_point = y.yield_point;
    report.relative_yield_elasticity = y.relative_yield_elasticity;
    report.elastic_regime_mean_price = y.elastic_regime_mean_price;
    report.in_typical_range = y.in_typical_range;

    let json_path = a.out_dir.join("fit.json");
    write_json(&json_path, &report).context("writing fit report")?;
    Ok(Outcome {
        inputs,
        outputs: vec![csv_path, json_path],
        seed: None,
        failure,
    })
}
