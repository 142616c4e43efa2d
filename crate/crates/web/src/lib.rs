//! Browser bindings: each export returns a JSON string `{"svg": ..., "summary": {...}}`
//! or throws with a readable message.

use serde_json::{json, Value};
use turnpoint::market::MarketConfig;
use turnpoint::meanfield::{classify, price_curve, price_of_capacity, solve_self_consistent, SolverOptions};
use turnpoint::numeric::grid;
use turnpoint::plot::{render, Chart, Marker, Series};
use turnpoint::simulator::run_sample;
use turnpoint::{CapacityDist, SimulationConfig};
use wasm_bindgen::prelude::*;

const MAX_AGENTS: usize = 400;

fn rect(mean: f64) -> CapacityDist {
    CapacityDist::Rectangular { mean, width: 1.0 }
}

fn finish(chart: &Chart, summary: Value) -> String {
    json!({ "svg": render(chart), "summary": summary }).to_string()
}

/// Purchasing price against `<Lambda> / v` over `[u_lo, u_hi]`.
pub fn curve_demo(v: f64, u_lo: f64, u_hi: f64, points: usize) -> Result<String, String> {
    if !(v > 0.0) {
        return Err("inventory must be positive".into());
    }
    if !(u_lo > 0.0 && u_hi > u_lo) || !(3..=400).contains(&points) {
        return Err("need 0 < u_lo < u_hi and 3 to 400 points".into());
    }
    let means = grid(u_lo * v, u_hi * v, points, true);
    let curve = price_curve(&rect(means[0]), &means, v, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let mut chart = Chart::new("Purchasing price against mean capacity", "mean capacity / v", "phi_p")
        .log_x(true)
        .with_series(Series::line(format!("v = {v}"), curve.scaled_means(), curve.phi_p.clone()));
    if let Some(u) = curve.turning_point {
        let (lo, hi) = curve.phi_p.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(*p), b.max(*p)));
        chart = chart.with_series(Series::line("turning point", vec![u, u], vec![lo, hi]));
    }
    Ok(finish(
        &chart,
        json!({
            "turning_point": curve.turning_point,
            "quasi_point": curve.quasi_point,
            "excess_point": curve.excess_point,
            "plateau_phi_p": curve.phi_p.last(),
        }),
    ))
}

/// Self-consistent price as a function of capacity for one market.
pub fn profile_demo(mean: f64, v: f64) -> Result<String, String> {
    let dist = rect(mean);
    let sol = solve_self_consistent(&dist, v, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let (lo, hi) = dist.support();
    let lambdas = grid(lo, hi, 200, false);
    let prices = lambdas.iter().map(|l| 1.0 + price_of_capacity(*l, &sol)).collect();
    let chart = Chart::new("Large-market price by capacity", "capacity", "price").with_series(Series::line("price", lambdas, prices));
    let c = classify(&sol);
    Ok(finish(
        &chart,
        json!({
            "phi_p": sol.phi_p,
            "y": sol.y,
            "consumers": c.consumers,
            "balanced": c.balanced,
            "quasi_consumers": c.quasi_consumers,
            "quasi_producers": c.quasi_producers,
            "excess_producers": c.excess_producers,
        }),
    ))
}

/// Relaxes one random market and scatters its equilibrium prices, with the
/// large-market price curve for comparison when it exists.
pub fn simulate_demo(n: usize, mean: f64, v: f64, seed: u64) -> Result<String, String> {
    if !(2..=MAX_AGENTS).contains(&n) {
        return Err(format!("agent count must lie in 2..={MAX_AGENTS}"));
    }
    let dist = rect(mean);
    let market = MarketConfig::new(n, v, dist.clone());
    let sim = SimulationConfig { seed, ..SimulationConfig::default() };
    let report = run_sample(&market, &sim, 0).map_err(|e| e.to_string())?;
    let state = &report.final_state;
    let mut chart = Chart::new("Equilibrium prices", "capacity", "price").with_series(Series::points(
        format!("{n} agents"),
        state.capacities.clone(),
        state.prices.clone(),
        Marker::Circle,
    ));
    let sol = solve_self_consistent(&dist, v, &SolverOptions::default()).ok();
    if let Some(sol) = &sol {
        let (lo, hi) = dist.support();
        let lambdas = grid(lo, hi, 200, false);
        let prices = lambdas.iter().map(|l| 1.0 + price_of_capacity(*l, sol)).collect();
        chart = chart.with_series(Series::line("large market", lambdas, prices));
    }
    Ok(finish(
        &chart,
        json!({
            "converged": report.converged,
            "steps": report.sweeps_used,
            "max_price_residual": report.max_price_residual,
            "mean_field_phi_p": sol.map(|s| s.phi_p),
        }),
    ))
}

#[wasm_bindgen(js_name = priceCurve)]
pub fn price_curve_js(v: f64, u_lo: f64, u_hi: f64, points: usize) -> Result<String, JsError> {
    curve_demo(v, u_lo, u_hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = priceProfile)]
pub fn price_profile_js(mean: f64, v: f64) -> Result<String, JsError> {
    profile_demo(mean, v).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(n: usize, mean: f64, v: f64, seed: u64) -> Result<String, JsError> {
    simulate_demo(n, mean, v, seed).map_err(|e| JsError::new(&e))
}
