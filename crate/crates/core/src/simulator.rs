//! Damped best-response dynamics and capacity-binned statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    demand_of_agent, net_cost, CapacitySampling, FlowMatrix, MarketConfig, MarketError, MarketState, SoftminField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error("market clearing did not converge after {iterations} iterations (residual {residual:e})")]
    ClearingFailed { iterations: usize, residual: f64 },
    #[error("state has {state} agents but the configuration expects {config}")]
    SizeMismatch { state: usize, config: usize },
    #[error("histogram edges must be strictly increasing with at least two entries ({0})")]
    BadEdges(&'static str),
    #[error("need at least one sample")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every agent moves at once against the same frozen prices.
    Synchronous,
    /// Agents move one at a time in shuffled order, each seeing the latest prices.
    #[default]
    RandomSequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Price damping rate: `phi <- (1 - eta) phi + eta * target`.
    pub eta: f64,
    /// Step of the inner clearing update: `xi <- (1 - epsilon) xi + epsilon * f(...)`.
    pub epsilon: f64,
    /// Single-agent price updates per time step (one synchronous round when synchronous).
    pub updates_per_step: usize,
    pub max_steps: usize,
    /// Bound on the largest `|target - phi|` at which the run counts as converged.
    pub convergence_tol: f64,
    pub clearing_iters: usize,
    pub clearing_tol: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            eta: 0.01,
            epsilon: 1.0,
            updates_per_step: 200,
            max_steps: 20_000,
            convergence_tol: 1e-8,
            clearing_iters: 100,
            clearing_tol: 1e-10,
            schedule: Schedule::RandomSequential,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidConfig(msg));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if self.updates_per_step == 0 || self.max_steps == 0 || self.clearing_iters == 0 {
            return bad("updates_per_step, max_steps and clearing_iters must be positive".into());
        }
        if !(self.convergence_tol > 0.0) || !(self.clearing_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn clearing(&self) -> ClearingOptions {
        ClearingOptions {
            max_iters: self.clearing_iters,
            tol: self.clearing_tol,
            step: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for ClearingOptions {
    fn default() -> Self {
        ClearingOptions {
            max_iters: 100,
            tol: 1e-10,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub converged: bool,
    pub sweeps_used: usize,
    pub max_price_residual: f64,
    /// Largest price residual at the start of each step.
    pub residual_history: Vec<f64>,
    pub final_state: MarketState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashAudit {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub certified: bool,
}

/// Draws capacities, uniform prices on `[1, 2]`, and clears the market.
pub fn init_market(config: &MarketConfig, seed: u64) -> Result<MarketState, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with_rng(config, &mut rng)
}

fn init_with_rng(config: &MarketConfig, rng: &mut ChaCha8Rng) -> Result<MarketState, SimulationError> {
    config.validate()?;
    let n = config.n_agents;
    let capacities: Vec<f64> = match config.sampling {
        CapacitySampling::Iid => (0..n).map(|_| config.capacity.sample(rng)).collect(),
        CapacitySampling::Stratified => {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            strata
                .into_iter()
                .map(|k| config.capacity.quantile((k as f64 + rng.gen::<f64>()) / n as f64))
                .collect()
        }
    };
    let prices: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
    let mut state = MarketState {
        capacities,
        prices,
        demands: vec![0.0; n],
        flows: FlowMatrix::zeros(n),
    };
    let opts = ClearingOptions {
        max_iters: 100_000,
        ..ClearingOptions::default()
    };
    // The cold start may be slow; whatever is reached is a valid warm start.
    let _ = clear_in_place(&mut state, config, &opts);
    state.refresh_flows(config.beta);
    Ok(state)
}

/// Solves `xi_i = f(sum_j xi_j r_ji - Lambda_i)` at frozen prices.
pub fn clear_market(
    state: &MarketState,
    config: &MarketConfig,
    opts: &ClearingOptions,
) -> Result<MarketState, SimulationError> {
    check_size(state, config)?;
    let mut out = state.clone();
    let (iterations, residual) = clear_in_place(&mut out, config, opts);
    if residual > opts.tol {
        return Err(SimulationError::ClearingFailed { iterations, residual });
    }
    out.refresh_flows(config.beta);
    Ok(out)
}

/// Returns the iterations used and the final sup-norm residual.
fn clear_in_place(state: &mut MarketState, config: &MarketConfig, opts: &ClearingOptions) -> (usize, f64) {
    let field = SoftminField::new(&state.prices, config.beta);
    let v = config.inventory;
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iters {
        let out = field.outflows(&state.demands);
        residual = 0.0;
        for i in 0..state.len() {
            let target = demand_of_agent(out[i], state.capacities[i], v);
            residual = f64::max(residual, (target - state.demands[i]).abs());
            state.demands[i] = ((1.0 - opts.step) * state.demands[i] + opts.step * target).max(0.0);
        }
        if residual <= opts.tol {
            // the last update moved demands by at most step * residual; re-measure
            let out = field.outflows(&state.demands);
            residual = (0..state.len())
                .map(|i| (demand_of_agent(out[i], state.capacities[i], v) - state.demands[i]).abs())
                .fold(0.0, f64::max);
            if residual <= opts.tol {
                return (it + 1, residual);
            }
        }
    }
    (opts.max_iters, residual)
}

fn check_size(state: &MarketState, config: &MarketConfig) -> Result<(), SimulationError> {
    if state.len() != config.n_agents
        || state.prices.len() != state.len()
        || state.demands.len() != state.len()
    {
        return Err(SimulationError::SizeMismatch {
            state: state.len(),
            config: config.n_agents,
        });
    }
    Ok(())
}

/// `|target_i - phi_i|` for every agent, `None` where no demand signal exists.
fn residuals(field: &SoftminField, state: &MarketState, v: f64) -> Vec<Option<f64>> {
    (0..state.len())
        .map(|i| {
            field
                .target_price(i, &state.demands, state.capacities[i], v)
                .ok()
                .map(|t| (t - state.prices[i]).abs())
        })
        .collect()
}

fn max_residual(res: &[Option<f64>]) -> f64 {
    res.iter().flatten().cloned().fold(0.0, f64::max)
}

/// Alternates market clearing with damped best-response price updates.
pub fn relax_to_equilibrium(
    state: &MarketState,
    market: &MarketConfig,
    sim: &SimulationConfig,
) -> Result<EquilibriumReport, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    relax_with_rng(state.clone(), market, sim, &mut rng)
}

fn relax_with_rng(
    mut state: MarketState,
    market: &MarketConfig,
    sim: &SimulationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EquilibriumReport, SimulationError> {
    market.validate()?;
    sim.validate()?;
    check_size(&state, market)?;
    let n = state.len();
    let v = market.inventory;
    let clearing = sim.clearing();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut history = Vec::new();

    for step in 0..sim.max_steps {
        let (_, clearing_residual) = clear_in_place(&mut state, market, &clearing);
        let mut field = SoftminField::new(&state.prices, market.beta);
        let res = residuals(&field, &state, v);
        let worst = max_residual(&res);
        history.push(worst);
        if worst <= sim.convergence_tol && clearing_residual <= sim.clearing_tol {
            state.refresh_flows(market.beta);
            return Ok(EquilibriumReport {
                converged: true,
                sweeps_used: step,
                max_price_residual: worst,
                residual_history: history,
                final_state: state,
            });
        }
        match sim.schedule {
            Schedule::RandomSequential => {
                for _ in 0..sim.updates_per_step {
                    if cursor == n {
                        order.shuffle(rng);
                        cursor = 0;
                    }
                    let i = order[cursor];
                    cursor += 1;
                    // no demand signal: hold the price for now
                    if let Ok(t) = field.target_price(i, &state.demands, state.capacities[i], v) {
                        let p = (1.0 - sim.eta) * field.prices()[i] + sim.eta * t;
                        field.set_price(i, p);
                    }
                }
                state.prices.copy_from_slice(field.prices());
            }
            Schedule::Synchronous => {
                let targets: Vec<Option<f64>> = (0..n)
                    .map(|i| field.target_price(i, &state.demands, state.capacities[i], v).ok())
                    .collect();
                for (p, t) in state.prices.iter_mut().zip(targets) {
                    if let Some(t) = t {
                        *p = (1.0 - sim.eta) * *p + sim.eta * t;
                    }
                }
            }
        }
    }

    let (_, _) = clear_in_place(&mut state, market, &clearing);
    let field = SoftminField::new(&state.prices, market.beta);
    let worst = max_residual(&residuals(&field, &state, v));
    state.refresh_flows(market.beta);
    Ok(EquilibriumReport {
        converged: false,
        sweeps_used: sim.max_steps,
        max_price_residual: worst,
        residual_history: history,
        final_state: state,
    })
}

/// Best-response residuals of a cleared state.
pub fn verify_nash(state: &MarketState, config: &MarketConfig, tol: f64) -> Result<NashAudit, SimulationError> {
    check_size(state, config)?;
    let field = SoftminField::new(&state.prices, config.beta);
    let res: Vec<f64> = residuals(&field, state, config.inventory)
        .into_iter()
        .map(|r| r.unwrap_or(0.0))
        .collect();
    let max_residual = res.iter().cloned().fold(0.0, f64::max);
    Ok(NashAudit {
        certified: max_residual <= tol,
        residuals: res,
        max_residual,
    })
}

/// Histogram layout for [`sample_statistics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub capacity_edges: Vec<f64>,
    pub price_edges: Vec<f64>,
    pub cost_edges: Vec<f64>,
}

impl BinSpec {
    /// Evenly spaced bins: capacity over the distribution's support, prices
    /// over `[0.9, price_max]` and costs over `[-cost_span, cost_span]`.
    pub fn uniform(config: &MarketConfig, capacity_bins: usize, price_bins: usize, price_max: f64, cost_span: f64) -> Self {
        let (lo, hi) = config.capacity.support();
        let even = |a: f64, b: f64, k: usize| -> Vec<f64> { (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect() };
        BinSpec {
            capacity_edges: even(lo, hi, capacity_bins.max(1)),
            price_edges: even(0.9, price_max, price_bins.max(1)),
            cost_edges: even(-cost_span, cost_span, price_bins.max(1)),
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        for (edges, name) in [
            (&self.capacity_edges, "capacity"),
            (&self.price_edges, "price"),
            (&self.cost_edges, "cost"),
        ] {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(SimulationError::BadEdges(name));
            }
        }
        Ok(())
    }
}

/// Per-capacity-bin histograms of equilibrium prices and net costs.
///
/// Values outside the price or cost range are counted in the nearest end bin,
/// so each row of a histogram sums to that bin's observation count. Agents
/// whose capacity falls outside the capacity edges are not counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedStatistics {
    pub capacity_bin_edges: Vec<f64>,
    pub price_bin_edges: Vec<f64>,
    pub cost_bin_edges: Vec<f64>,
    /// `price_histogram[capacity_bin][price_bin]`
    pub price_histogram: Vec<Vec<u64>>,
    pub cost_histogram: Vec<Vec<u64>>,
    pub observations: Vec<u64>,
    pub price_sums: Vec<f64>,
    pub cost_sums: Vec<f64>,
    pub sample_count: usize,
    pub excluded_samples: usize,
    /// Agent-level records `(capacity, price, cost)` of the included samples.
    pub agents: Vec<(f64, f64, f64)>,
}

impl BinnedStatistics {
    fn empty(spec: &BinSpec) -> Self {
        let nc = spec.capacity_edges.len() - 1;
        BinnedStatistics {
            capacity_bin_edges: spec.capacity_edges.clone(),
            price_bin_edges: spec.price_edges.clone(),
            cost_bin_edges: spec.cost_edges.clone(),
            price_histogram: vec![vec![0; spec.price_edges.len() - 1]; nc],
            cost_histogram: vec![vec![0; spec.cost_edges.len() - 1]; nc],
            observations: vec![0; nc],
            price_sums: vec![0.0; nc],
            cost_sums: vec![0.0; nc],
            sample_count: 0,
            excluded_samples: 0,
            agents: Vec::new(),
        }
    }

    fn add(&mut self, capacity: f64, price: f64, cost: f64) {
        self.agents.push((capacity, price, cost));
        let Some(b) = bin_index(&self.capacity_bin_edges, capacity) else {
            return;
        };
        let pb = clamped_bin(&self.price_bin_edges, price);
        let cb = clamped_bin(&self.cost_bin_edges, cost);
        self.price_histogram[b][pb] += 1;
        self.cost_histogram[b][cb] += 1;
        self.observations[b] += 1;
        self.price_sums[b] += price;
        self.cost_sums[b] += cost;
    }

    pub fn total_observations(&self) -> u64 {
        self.observations.iter().sum()
    }

    /// Mean price per capacity bin, `None` for empty bins.
    pub fn mean_prices(&self) -> Vec<Option<f64>> {
        self.observations
            .iter()
            .zip(&self.price_sums)
            .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
            .collect()
    }

    pub fn mean_costs(&self) -> Vec<Option<f64>> {
        self.observations
            .iter()
            .zip(&self.cost_sums)
            .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
            .collect()
    }

    /// Natural log of the conditional price density within each capacity bin;
    /// `None` where a cell is empty.
    pub fn price_log_density(&self) -> Vec<Vec<Option<f64>>> {
        log_density(&self.price_histogram, &self.observations, &self.price_bin_edges)
    }

    pub fn cost_log_density(&self) -> Vec<Vec<Option<f64>>> {
        log_density(&self.cost_histogram, &self.observations, &self.cost_bin_edges)
    }
}

fn log_density(hist: &[Vec<u64>], obs: &[u64], edges: &[f64]) -> Vec<Vec<Option<f64>>> {
    hist.iter()
        .zip(obs)
        .map(|(row, &n)| {
            row.iter()
                .enumerate()
                .map(|(k, &c)| (c > 0).then(|| (c as f64 / (n as f64 * (edges[k + 1] - edges[k]))).ln()))
                .collect()
        })
        .collect()
}

fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[last]) {
        return None;
    }
    let k = edges.partition_point(|e| *e <= x);
    Some(k.saturating_sub(1).min(last - 1))
}

fn clamped_bin(edges: &[f64], x: f64) -> usize {
    let x = x.clamp(edges[0], edges[edges.len() - 1]);
    bin_index(edges, x).unwrap_or(0)
}

/// Seed of sample `k` derived from the run seed.
pub fn sample_seed(seed: u64, k: usize) -> u64 {
    // splitmix64 finaliser of (seed, k)
    let mut z = seed ^ (k as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Equilibrium of one independently seeded market.
pub fn run_sample(market: &MarketConfig, sim: &SimulationConfig, k: usize) -> Result<EquilibriumReport, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(sim.seed, k));
    let state = init_with_rng(market, &mut rng)?;
    relax_with_rng(state, market, sim, &mut rng)
}

/// Relaxes `n_samples` independent markets, in sample order.
///
/// Samples run on the current rayon pool; results do not depend on the
/// number of threads.
pub fn run_samples(market: &MarketConfig, sim: &SimulationConfig, n_samples: usize) -> Result<Vec<EquilibriumReport>, SimulationError> {
    if n_samples == 0 {
        return Err(SimulationError::NoSamples);
    }
    market.validate()?;
    sim.validate()?;
    (0..n_samples).into_par_iter().map(|k| run_sample(market, sim, k)).collect()
}

impl BinnedStatistics {
    /// Bins the converged reports; the others are counted as excluded.
    pub fn from_reports(reports: &[EquilibriumReport], bins: &BinSpec) -> Result<Self, SimulationError> {
        bins.validate()?;
        let mut stats = BinnedStatistics::empty(bins);
        stats.sample_count = reports.len();
        for report in reports {
            if !report.converged {
                stats.excluded_samples += 1;
                continue;
            }
            let s = &report.final_state;
            for i in 0..s.len() {
                stats.add(s.capacities[i], s.prices[i], net_cost(i, s));
            }
        }
        Ok(stats)
    }
}

/// Relaxes `n_samples` independent markets and bins the converged ones.
pub fn sample_statistics(
    market: &MarketConfig,
    sim: &SimulationConfig,
    n_samples: usize,
    bins: &BinSpec,
) -> Result<BinnedStatistics, SimulationError> {
    bins.validate()?;
    BinnedStatistics::from_reports(&run_samples(market, sim, n_samples)?, bins)
}
