//! Stocks-to-use (SUR) elasticity of price from commodity records.
//!
//! Records are sorted by SUR, consecutive windows are regressed by ordinary
//! least squares, and the negated slopes form an empirical elasticity curve.
//! That curve is compared with the model's capacity elasticity after fitting
//! one scale for SUR and one for elasticity.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::CapacityDist;
use crate::meanfield::{price_curve, MeanFieldError, SolverOptions};
use crate::numeric::{grid, median, nelder_mead};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticityError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("window size must be at least 3, got {0}")]
    Window(usize),
    #[error("duplicate period {0}")]
    DuplicatePeriod(Period),
    #[error("price must be positive and finite in period {period}, got {price}")]
    Price { period: Period, price: f64 },
    #[error("SUR must be finite in period {period}, got {sur}")]
    Sur { period: Period, sur: f64 },
    #[error("negative SUR {sur} in period {period} (allow_negative_sur not set)")]
    NegativeSur { period: Period, sur: f64 },
    #[error("series mixes yearly and quarterly periods")]
    MixedGranularity,
    #[error("no records with SUR between the yield point {yield_sur} and the turning point {turning_sur}")]
    EmptyElasticRegime { yield_sur: f64, turning_sur: f64 },
    #[error("rescale fit did not converge (best sur_scale {sur_scale}, elasticity_scale {elasticity_scale})")]
    FitFailed { sur_scale: f64, elasticity_scale: f64 },
    #[error("mask length {mask} does not match the {points} curve points")]
    MaskLength { mask: usize, points: usize },
    #[error("invalid period {0:?}: expected a year like 1998 or a quarter like 2001Q1")]
    PeriodSyntax(String),
    #[error(transparent)]
    Model(#[from] MeanFieldError),
}

/// A year or a quarter of a year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Period {
    Year(i32),
    Quarter { year: i32, quarter: u8 },
}

impl Period {
    pub fn year(&self) -> i32 {
        match self {
            Period::Year(y) | Period::Quarter { year: y, .. } => *y,
        }
    }

    pub fn is_quarter(&self) -> bool {
        matches!(self, Period::Quarter { .. })
    }

    fn key(&self) -> (i32, u8) {
        match self {
            Period::Year(y) => (*y, 0),
            Period::Quarter { year, quarter } => (*year, *quarter),
        }
    }
}

impl Ord for Period {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Period {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Year(y) => write!(f, "{y}"),
            Period::Quarter { year, quarter } => write!(f, "{year}Q{quarter}"),
        }
    }
}

impl FromStr for Period {
    type Err = ElasticityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || ElasticityError::PeriodSyntax(s.to_string());
        let digits = |x: &str| !x.is_empty() && x.bytes().enumerate().all(|(i, b)| b.is_ascii_digit() || (i == 0 && b == b'-'));
        if let Some((y, q)) = t.split_once(['Q', 'q']) {
            if !digits(y) || q.len() != 1 {
                return Err(bad());
            }
            let quarter: u8 = q.parse().map_err(|_| bad())?;
            if !(1..=4).contains(&quarter) {
                return Err(bad());
            }
            return Ok(Period::Quarter {
                year: y.parse().map_err(|_| bad())?,
                quarter,
            });
        }
        if !digits(t) {
            return Err(bad());
        }
        Ok(Period::Year(t.parse().map_err(|_| bad())?))
    }
}

impl TryFrom<String> for Period {
    type Error = ElasticityError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Period> for String {
    fn from(p: Period) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub period: Period,
    /// Price in constant currency units.
    pub price: f64,
    /// Stocks-to-use ratio in years.
    pub sur: f64,
}

/// Validated records of one commodity, ordered by period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommoditySeries {
    pub name: String,
    records: Vec<Record>,
    pub allow_negative_sur: bool,
}

impl CommoditySeries {
    pub fn new(name: impl Into<String>, mut records: Vec<Record>, allow_negative_sur: bool) -> Result<Self, ElasticityError> {
        records.sort_by_key(|a| a.period);
        if let Some(first) = records.first() {
            if records.iter().any(|r| r.period.is_quarter() != first.period.is_quarter()) {
                return Err(ElasticityError::MixedGranularity);
            }
        }
        for w in records.windows(2) {
            if w[0].period == w[1].period {
                return Err(ElasticityError::DuplicatePeriod(w[0].period));
            }
        }
        for r in &records {
            if !(r.price > 0.0) || !r.price.is_finite() {
                return Err(ElasticityError::Price {
                    period: r.period,
                    price: r.price,
                });
            }
            if !r.sur.is_finite() {
                return Err(ElasticityError::Sur { period: r.period, sur: r.sur });
            }
            if r.sur < 0.0 && !allow_negative_sur {
                return Err(ElasticityError::NegativeSur { period: r.period, sur: r.sur });
            }
        }
        Ok(CommoditySeries {
            name: name.into(),
            records,
            allow_negative_sur,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `(sur, price)` pairs in ascending SUR, ties in period order.
pub fn sorted_points(series: &CommoditySeries) -> Result<Vec<(f64, f64)>, ElasticityError> {
    if series.len() < 2 {
        return Err(ElasticityError::TooFewPoints {
            needed: 2,
            got: series.len(),
        });
    }
    let mut recs = series.records().to_vec();
    // records are already in period order and the sort is stable
    recs.sort_by(|a, b| a.sur.total_cmp(&b.sur));
    Ok(recs.into_iter().map(|r| (r.sur, r.price)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityPoint {
    pub sur_mean: f64,
    pub elasticity: f64,
    pub n: usize,
    pub slope_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalElasticityCurve {
    pub source: String,
    pub window_size: usize,
    pub points: Vec<ElasticityPoint>,
    /// Windows dropped because all their SURs were equal.
    pub skipped_windows: usize,
}

/// Slope, intercept-free residual sum of squares and `Sxx` of an OLS fit.
fn ols(window: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = window.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let scale = window.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    if !(sxx > (1e-12 * scale).powi(2) * n) {
        return None;
    }
    let sxy: f64 = window.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = window.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Some((slope, ssr, sxx))
}

/// Regresses price on SUR over every window of `k` consecutive points.
pub fn windowed_elasticity(source: &str, points: &[(f64, f64)], k: usize) -> Result<EmpiricalElasticityCurve, ElasticityError> {
    if k < 3 {
        return Err(ElasticityError::Window(k));
    }
    if points.len() < k {
        return Err(ElasticityError::TooFewPoints {
            needed: k,
            got: points.len(),
        });
    }
    let mut out = Vec::new();
    let mut skipped = 0;
    for w in points.windows(k) {
        match ols(w) {
            Some((slope, ssr, sxx)) => out.push(ElasticityPoint {
                sur_mean: w.iter().map(|p| p.0).sum::<f64>() / k as f64,
                elasticity: -slope,
                n: k,
                slope_stderr: (ssr / (k - 2) as f64 / sxx).sqrt(),
            }),
            None => skipped += 1,
        }
    }
    Ok(EmpiricalElasticityCurve {
        source: source.to_string(),
        window_size: k,
        points: out,
        skipped_windows: skipped,
    })
}

/// The model's capacity elasticity `-d phi_p / du` against `u = <Lambda>/v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCurve {
    pub v: f64,
    pub u: Vec<f64>,
    pub elasticity: Vec<f64>,
    pub phi_p: Vec<f64>,
    /// Turning point `u*` detected on this curve.
    pub turning_point: f64,
}

impl ModelCurve {
    /// Log-log interpolation; power-law extrapolation beyond the grid.
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.u.len();
        if !(u > 0.0) {
            return f64::NAN;
        }
        let k = self.u.partition_point(|x| *x < u).clamp(1, n - 1);
        let (u0, u1) = (self.u[k - 1], self.u[k]);
        let floor = f64::MIN_POSITIVE;
        let (e0, e1) = (self.elasticity[k - 1].max(floor), self.elasticity[k].max(floor));
        let f = (u.ln() - u0.ln()) / (u1.ln() - u0.ln());
        (e0.ln() + f * (e1.ln() - e0.ln())).exp()
    }
}

/// Default grid of the model curve: 160 log-spaced points over `u` in `[0.02, 20]`.
pub fn default_model_grid() -> Vec<f64> {
    grid(0.02, 20.0, 160, true)
}

/// Solves the rectangular unit-width model across `u_grid` at inventory `v_small`.
pub fn model_elasticity_curve(v_small: f64, u_grid: &[f64]) -> Result<ModelCurve, ElasticityError> {
    let means: Vec<f64> = u_grid.iter().map(|u| u * v_small).collect();
    let curve = price_curve(&CapacityDist::rectangular(0.1), &means, v_small, &SolverOptions::default())?;
    let turning_point = match curve.turning_point {
        Some(u) => u,
        None => crate::meanfield::locate_turning_point(&curve)?,
    };
    Ok(ModelCurve {
        v: v_small,
        u: u_grid.to_vec(),
        elasticity: curve.elasticity,
        phi_p: curve.phi_p,
        turning_point,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleFit {
    /// Years of SUR per unit of `u`.
    pub sur_scale: f64,
    /// Price per year of SUR per unit of model elasticity.
    pub elasticity_scale: f64,
    /// Root-mean-square misfit in rescaled coordinates over the masked points.
    pub rms_error: f64,
    pub fit_mask: Vec<bool>,
    pub weighted: bool,
}

impl RescaleFit {
    /// SUR of the model turning point under this fit.
    pub fn turning_sur(&self, model: &ModelCurve) -> f64 {
        model.turning_point * self.sur_scale
    }

    /// The fitted objective (weighted squared misfit in data units) over the
    /// points selected by `mask`, at this fit's scales.
    pub fn misfit_on(&self, curve: &EmpiricalElasticityCurve, model: &ModelCurve, mask: &[bool]) -> f64 {
        let used: Vec<&ElasticityPoint> = curve.points.iter().zip(mask).filter(|(_, m)| **m).map(|(p, _)| p).collect();
        let weights = point_weights(&used, self.weighted);
        let xs: Vec<f64> = used.iter().map(|p| p.sur_mean).collect();
        let es: Vec<f64> = used.iter().map(|p| p.elasticity).collect();
        misfit(&xs, &es, &weights, model, self.sur_scale, self.elasticity_scale)
    }
}

/// Fits `E ~ e * M(sur / s)` to the masked curve points.
///
/// The misfit is measured in data units, so that shrinking both scales
/// cannot drive it to zero; an optional inverse-variance weighting uses the
/// slope standard errors. A log-spaced scan over `s` (with the optimal `e`
/// in closed form) seeds a simplex search over `(ln s, ln e)`.
pub fn fit_rescale(
    curve: &EmpiricalElasticityCurve,
    model: &ModelCurve,
    mask: Option<&[bool]>,
    weighted: bool,
) -> Result<RescaleFit, ElasticityError> {
    let n = curve.points.len();
    let mask: Vec<bool> = match mask {
        Some(m) if m.len() != n => {
            return Err(ElasticityError::MaskLength {
                mask: m.len(),
                points: n,
            })
        }
        Some(m) => m.to_vec(),
        None => vec![true; n],
    };
    let used: Vec<&ElasticityPoint> = curve.points.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| p).collect();
    if used.len() < 4 {
        return Err(ElasticityError::TooFewPoints {
            needed: 4,
            got: used.len(),
        });
    }
    let weights = point_weights(&used, weighted);
    let xs: Vec<f64> = used.iter().map(|p| p.sur_mean).collect();
    let es: Vec<f64> = used.iter().map(|p| p.elasticity).collect();

    let best_e = |s: f64| -> (f64, f64) {
        let (mut em, mut mm) = (0.0, 0.0);
        for ((x, e), w) in xs.iter().zip(&es).zip(&weights) {
            let m = model.eval(x / s);
            em += w * e * m;
            mm += w * m * m;
        }
        let e = if mm > 0.0 { (em / mm).max(1e-300) } else { 1e-300 };
        (e, misfit(&xs, &es, &weights, model, s, e))
    };

    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_pos = xs.iter().cloned().filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min);
    let x_ref = if x_max > 0.0 { x_max } else { 1.0 };
    let x_low = if x_pos.is_finite() { x_pos } else { x_ref };
    let u_hi = *model.u.last().unwrap();
    let u_lo = model.u[0];
    let scan = grid(x_low / u_hi, x_ref / u_lo, 400, true);
    let (mut s0, mut e0, mut f0) = (scan[0], 1.0, f64::INFINITY);
    for &s in &scan {
        let (e, f) = best_e(s);
        if f < f0 {
            (s0, e0, f0) = (s, e, f);
        }
    }
    let objective = |z: &[f64]| misfit(&xs, &es, &weights, model, z[0].exp(), z[1].exp());
    let result = nelder_mead(objective, &[s0.ln(), e0.ln()], 0.05, 1e-14, 4000);
    let (s, e) = if result.value <= f0 {
        (result.point[0].exp(), result.point[1].exp())
    } else {
        (s0, e0)
    };
    if !result.converged || !(s > 0.0 && e > 0.0 && s.is_finite() && e.is_finite()) {
        return Err(ElasticityError::FitFailed {
            sur_scale: s,
            elasticity_scale: e,
        });
    }
    let rms = (xs
        .iter()
        .zip(&es)
        .map(|(x, y)| (y / e - model.eval(x / s)).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(RescaleFit {
        sur_scale: s,
        elasticity_scale: e,
        rms_error: rms,
        fit_mask: mask,
        weighted,
    })
}

fn point_weights(points: &[&ElasticityPoint], weighted: bool) -> Vec<f64> {
    if !weighted {
        return vec![1.0; points.len()];
    }
    let errs: Vec<f64> = points.iter().map(|p| p.slope_stderr).filter(|s| *s > 0.0 && s.is_finite()).collect();
    let Some(typical) = median(&errs) else {
        return vec![1.0; points.len()];
    };
    let floor = 1e-3 * typical;
    points.iter().map(|p| 1.0 / p.slope_stderr.max(floor).powi(2)).collect()
}

fn misfit(xs: &[f64], es: &[f64], ws: &[f64], model: &ModelCurve, s: f64, e: f64) -> f64 {
    xs.iter()
        .zip(es)
        .zip(ws)
        .map(|((x, y), w)| w * (y - e * model.eval(x / s)).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldPoint {
    pub sur: f64,
    pub elasticity: f64,
}

/// Point of maximum elasticity, provided some lower-SUR point lies strictly
/// below it; `None` for curves that only fall with SUR.
pub fn detect_yield_point(curve: &EmpiricalElasticityCurve) -> Option<YieldPoint> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return None;
    }
    let (k, best) = pts
        .iter()
        .enumerate()
        .fold((0, &pts[0]), |acc, (i, p)| if p.elasticity > acc.1.elasticity { (i, p) } else { acc });
    pts[..k].iter().any(|p| p.elasticity < best.elasticity).then_some(YieldPoint {
        sur: best.sur_mean,
        elasticity: best.elasticity,
    })
}

/// Mean price over records with SUR in `[yield_sur, turning_sur]`.
pub fn elastic_regime_mean_price(series: &CommoditySeries, yield_sur: f64, turning_sur: f64) -> Result<f64, ElasticityError> {
    // window means carry rounding, so the end points get a little slack
    let slack = 1e-9 * yield_sur.abs().max(turning_sur.abs());
    let prices: Vec<f64> = series
        .records()
        .iter()
        .filter(|r| r.sur >= yield_sur - slack && r.sur <= turning_sur + slack)
        .map(|r| r.price)
        .collect();
    if prices.is_empty() {
        return Err(ElasticityError::EmptyElasticRegime { yield_sur, turning_sur });
    }
    Ok(prices.iter().sum::<f64>() / prices.len() as f64)
}

/// `E_yield * SUR_yield / (mean price between the yield and turning points)`.
pub fn relative_yield_elasticity(series: &CommoditySeries, yield_point: YieldPoint, turning_sur: f64) -> Result<f64, ElasticityError> {
    let mean = elastic_regime_mean_price(series, yield_point.sur, turning_sur)?;
    Ok(yield_point.elasticity * yield_point.sur / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub yield_point: Option<YieldPoint>,
    pub turning_point_sur: Option<f64>,
    pub relative_yield_elasticity: Option<f64>,
    pub elastic_regime_mean_price: Option<f64>,
    /// Whether the relative yield elasticity lies in the typical 0.1 to 0.5
    /// range; informational only.
    pub in_typical_range: Option<bool>,
}

/// Yield point, turning SUR and relative yield elasticity of one commodity.
pub fn yield_report(series: &CommoditySeries, curve: &EmpiricalElasticityCurve, turning_sur: Option<f64>) -> YieldReport {
    let yield_point = detect_yield_point(curve);
    let (mean, rel) = match (yield_point, turning_sur) {
        (Some(y), Some(t)) => match elastic_regime_mean_price(series, y.sur, t) {
            Ok(m) => (Some(m), Some(y.elasticity * y.sur / m)),
            Err(_) => (None, None),
        },
        _ => (None, None),
    };
    YieldReport {
        yield_point,
        turning_point_sur: turning_sur,
        relative_yield_elasticity: rel,
        elastic_regime_mean_price: mean,
        in_typical_range: rel.map(|r| (0.1..=0.5).contains(&r)),
    }
}

/// Mask selecting the points at or above the yield point (all points when
/// there is none).
pub fn mask_above_yield(curve: &EmpiricalElasticityCurve) -> Vec<bool> {
    match detect_yield_point(curve) {
        Some(y) => curve.points.iter().map(|p| p.sur_mean >= y.sur).collect(),
        None => vec![true; curve.points.len()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositePoint {
    pub source: String,
    /// `sur_mean / sur_scale`
    pub u: f64,
    /// `elasticity / elasticity_scale`
    pub elasticity: f64,
}

/// All points of several fitted curves in rescaled coordinates.
pub fn composite(curves: &[(&EmpiricalElasticityCurve, &RescaleFit)], mask_below_yield: bool) -> Vec<CompositePoint> {
    let mut out = Vec::new();
    for (curve, fit) in curves {
        let keep = if mask_below_yield {
            mask_above_yield(curve)
        } else {
            vec![true; curve.points.len()]
        };
        for (p, k) in curve.points.iter().zip(keep) {
            if k {
                out.push(CompositePoint {
                    source: curve.source.clone(),
                    u: p.sur_mean / fit.sur_scale,
                    elasticity: p.elasticity / fit.elasticity_scale,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(year: i32, price: f64, sur: f64) -> Record {
        Record {
            period: Period::Year(year),
            price,
            sur,
        }
    }

    #[test]
    fn period_parsing_and_order() {
        assert_eq!("1998".parse::<Period>().unwrap(), Period::Year(1998));
        assert_eq!("2001Q3".parse::<Period>().unwrap(), Period::Quarter { year: 2001, quarter: 3 });
        assert!("2001Q5".parse::<Period>().is_err());
        assert!("19x8".parse::<Period>().is_err());
        assert!("2001Q1".parse::<Period>().unwrap() < "2001Q2".parse::<Period>().unwrap());
        assert!("2000Q4".parse::<Period>().unwrap() < "2001Q1".parse::<Period>().unwrap());
        assert_eq!(Period::Quarter { year: 2014, quarter: 4 }.to_string(), "2014Q4");
    }

    #[test]
    fn sorting_breaks_ties_by_period() {
        let s = CommoditySeries::new("x", vec![rec(2000, 3.0, 0.3), rec(1999, 2.0, 0.1), rec(1998, 1.0, 0.1)], false).unwrap();
        assert_eq!(sorted_points(&s).unwrap(), vec![(0.1, 1.0), (0.1, 2.0), (0.3, 3.0)]);
    }

    #[test]
    fn exact_line_and_constant_price() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (0.1 * i as f64, 10.0 - 2.0 * 0.1 * i as f64)).collect();
        let c = windowed_elasticity("line", &pts, 4).unwrap();
        assert_eq!(c.points.len(), 5);
        for p in &c.points {
            assert!((p.elasticity - 2.0).abs() < 1e-12);
            assert!(p.slope_stderr < 1e-6);
        }
        let flat: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 7.0)).collect();
        assert!(windowed_elasticity("flat", &flat, 3).unwrap().points.iter().all(|p| p.elasticity == 0.0));
    }

    #[test]
    fn degenerate_windows_are_skipped() {
        let pts = vec![(0.2, 1.0), (0.2, 2.0), (0.2, 3.0), (0.5, 1.0)];
        let c = windowed_elasticity("d", &pts, 3).unwrap();
        assert_eq!(c.skipped_windows, 1);
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn series_validation() {
        assert!(matches!(
            CommoditySeries::new("d", vec![rec(1998, 1.0, 0.1), rec(1998, 2.0, 0.2)], false),
            Err(ElasticityError::DuplicatePeriod(Period::Year(1998)))
        ));
        assert!(CommoditySeries::new("n", vec![rec(1998, 1.0, -0.1)], false).is_err());
        assert!(CommoditySeries::new("n", vec![rec(1998, 1.0, -0.1)], true).is_ok());
        assert!(CommoditySeries::new("p", vec![rec(1998, 0.0, 0.1)], false).is_err());
        let mixed = vec![
            rec(1998, 1.0, 0.1),
            Record {
                period: Period::Quarter { year: 1999, quarter: 1 },
                price: 1.0,
                sur: 0.1,
            },
        ];
        assert_eq!(CommoditySeries::new("m", mixed, false), Err(ElasticityError::MixedGranularity));
    }

    fn curve_of(values: &[(f64, f64)]) -> EmpiricalElasticityCurve {
        EmpiricalElasticityCurve {
            source: "t".into(),
            window_size: 3,
            points: values
                .iter()
                .map(|&(s, e)| ElasticityPoint {
                    sur_mean: s,
                    elasticity: e,
                    n: 3,
                    slope_stderr: 0.1,
                })
                .collect(),
            skipped_windows: 0,
        }
    }

    #[test]
    fn yield_point_detection() {
        let monotone = curve_of(&[(0.1, 9.0), (0.2, 5.0), (0.3, 2.0), (0.4, 1.0)]);
        assert_eq!(detect_yield_point(&monotone), None);
        let peaked = curve_of(&[(0.05, -1.0), (0.1, 3.0), (0.163, 8.0), (0.2, 4.0), (0.3, 1.0)]);
        assert_eq!(detect_yield_point(&peaked), Some(YieldPoint { sur: 0.163, elasticity: 8.0 }));
    }
}
