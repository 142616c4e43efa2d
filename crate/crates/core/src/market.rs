//! Per-agent market equations on a fully connected network.
//!
//! Everything here is a pure function of its inputs. Prices are measured in
//! units of the intrinsic value `1/beta`, capacities and flows in commodity
//! units per unit time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::CapacityDist;
use crate::numeric::{bracketed_newton_decreasing, logistic, softplus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid market configuration: {0}")]
    InvalidConfig(String),
    #[error("isolated agent: no trading partners to buy from")]
    IsolatedAgent,
    #[error("no demand signal for agent {agent}: no buyer purchases from it")]
    NoDemandSignal { agent: usize },
    #[error("agent index {agent} out of range for a market of {n} agents")]
    AgentIndex { agent: usize, n: usize },
}

/// How capacities are drawn for a simulated market.
///
/// `Stratified` draws one capacity uniformly inside each of `n` equal
/// probability strata and shuffles them, so each agent is still marginally
/// distributed like the capacity distribution while the realised mean stays
/// within `O(n^-1.5)` of the population mean. `Iid` draws independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacitySampling {
    #[default]
    Stratified,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub n_agents: usize,
    /// Inverse temperature of the purchase fractions.
    pub beta: f64,
    /// Inventory level `v`, the smoothing scale of the demand rectifier.
    pub inventory: f64,
    pub capacity: CapacityDist,
    #[serde(default)]
    pub sampling: CapacitySampling,
}

impl MarketConfig {
    pub fn new(n_agents: usize, inventory: f64, capacity: CapacityDist) -> Self {
        MarketConfig {
            n_agents,
            beta: 1.0,
            inventory,
            capacity,
            sampling: CapacitySampling::default(),
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.n_agents < 2 {
            return Err(MarketError::InvalidConfig(format!("need at least 2 agents, got {}", self.n_agents)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(MarketError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.inventory >= 0.0) || !self.inventory.is_finite() {
            return Err(MarketError::InvalidConfig(format!(
                "inventory must be non-negative, got {}",
                self.inventory
            )));
        }
        self.capacity
            .validate()
            .map_err(|e| MarketError::InvalidConfig(e.to_string()))
    }
}

/// Purchase flows `y_ij = xi_i r_ij`: the amount agent `i` buys from agent
/// `j` per unit time, with a zero diagonal.
///
/// The matrix is dense in meaning but stored in factored form (demands,
/// price weights and per-buyer normalisations), so entries cost O(1) and
/// storage stays O(n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMatrix {
    demands: Vec<f64>,
    weights: Vec<f64>,
    others: Vec<f64>,
}

impl FlowMatrix {
    pub fn zeros(n: usize) -> Self {
        FlowMatrix {
            demands: vec![0.0; n],
            weights: vec![1.0; n],
            others: vec![(n.max(2) - 1) as f64; n],
        }
    }

    pub fn size(&self) -> usize {
        self.demands.len()
    }

    /// Flow shipped from `j` to `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.demands[i] * self.weights[j] / self.others[i]
        }
    }

    /// Total bought by `i`.
    pub fn purchases(&self, i: usize) -> f64 {
        (0..self.size()).map(|j| self.get(i, j)).sum()
    }

    /// Total sold by `j`.
    pub fn sales(&self, j: usize) -> f64 {
        (0..self.size()).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> f64 {
        (0..self.size()).map(|i| self.purchases(i)).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub capacities: Vec<f64>,
    pub prices: Vec<f64>,
    pub demands: Vec<f64>,
    pub flows: FlowMatrix,
}

impl MarketState {
    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    /// Recomputes the flow matrix from the current prices and demands.
    pub fn refresh_flows(&mut self, beta: f64) {
        let field = SoftminField::new(&self.prices, beta);
        self.flows = field.flows(&self.demands);
    }

    /// Amount each agent ships to its buyers, `sum_j xi_j r_ji`.
    pub fn outflows(&self, beta: f64) -> Vec<f64> {
        SoftminField::new(&self.prices, beta).outflows(&self.demands)
    }
}

/// Smoothed rectifier `f(x) = v ln(1 + exp(x/v))`; the hard `max(x, 0)` at `v = 0`.
pub fn smooth_demand(x: f64, v: f64) -> f64 {
    if v == 0.0 {
        x.max(0.0)
    } else {
        v * softplus(x / v)
    }
}

/// `f'(x)`: the logistic `1/(1 + exp(-x/v))`, or the unit step at `v = 0`
/// (taken as 0 at `x = 0`).
pub fn demand_slope(x: f64, v: f64) -> f64 {
    if v == 0.0 {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        logistic(x / v)
    }
}

/// Demand of an agent that ships `outflow_total` and has `capacity`.
pub fn demand_of_agent(outflow_total: f64, capacity: f64, v: f64) -> f64 {
    smooth_demand(outflow_total - capacity, v)
}

/// Softmin purchase fractions over the neighbours' prices.
pub fn purchase_fractions(neighbor_prices: &[f64], beta: f64) -> Result<Vec<f64>, MarketError> {
    if neighbor_prices.is_empty() {
        return Err(MarketError::IsolatedAgent);
    }
    let lowest = neighbor_prices.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = neighbor_prices.iter().map(|p| (-beta * (p - lowest)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Purchasing cost minus sales revenue of agent `i`.
pub fn net_cost(i: usize, state: &MarketState) -> f64 {
    let n = state.len();
    let mut cost = 0.0;
    for j in 0..n {
        if j != i {
            cost += state.flows.get(i, j) * state.prices[j] - state.flows.get(j, i) * state.prices[i];
        }
    }
    cost
}

/// Marginal loss of sales to buyer `j` when the seller raises its price,
/// `xi_j r_ji (1 - r_ji)`.
pub fn bargaining_message(xi_j: f64, r_ji: f64) -> f64 {
    xi_j * r_ji * (1.0 - r_ji)
}

/// Best-response target price of agent `i` with all other prices frozen.
///
/// For `v > 0` this is the right-hand side of the stationarity condition
/// evaluated at the current state. At `v = 0` the slope of the demand is a
/// step, so the condition is solved for the agent's own price: the result is
/// the price in `[first, first + purchase]` at which the agent's sales exactly
/// match its capacity, or the nearer end when no such price exists.
pub fn price_update(i: usize, state: &MarketState, config: &MarketConfig) -> Result<f64, MarketError> {
    let n = state.len();
    if i >= n {
        return Err(MarketError::AgentIndex { agent: i, n });
    }
    if n < 2 {
        return Err(MarketError::IsolatedAgent);
    }
    let field = SoftminField::new(&state.prices, config.beta);
    field.target_price(i, &state.demands, state.capacities[i], config.inventory)
}

/// Exponential price weights of a fully connected market together with the
/// per-buyer normalisations, all computed without cancellation.
#[derive(Debug, Clone)]
pub(crate) struct SoftminField {
    beta: f64,
    reference: f64,
    prices: Vec<f64>,
    weights: Vec<f64>,
    /// `Z_j = sum_{k != j} w_k`
    others: Vec<f64>,
    /// `sum_{k != j} w_k phi_k`
    others_weighted: Vec<f64>,
}

impl SoftminField {
    pub(crate) fn new(prices: &[f64], beta: f64) -> Self {
        let reference = prices.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = prices.iter().map(|p| (-beta * (p - reference)).exp()).collect();
        let mut field = SoftminField {
            beta,
            reference,
            prices: prices.to_vec(),
            weights,
            others: Vec::new(),
            others_weighted: Vec::new(),
        };
        field.rebuild_sums();
        field
    }

    fn rebuild_sums(&mut self) {
        self.others = sum_excluding(&self.weights);
        let wp: Vec<f64> = self.weights.iter().zip(&self.prices).map(|(w, p)| w * p).collect();
        self.others_weighted = sum_excluding(&wp);
    }

    /// Changes one price, keeping the reference level fixed.
    pub(crate) fn set_price(&mut self, i: usize, price: f64) {
        self.prices[i] = price;
        self.weights[i] = (-self.beta * (price - self.reference)).exp();
        self.rebuild_sums();
    }

    pub(crate) fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub(crate) fn outflows(&self, demands: &[f64]) -> Vec<f64> {
        let per_buyer: Vec<f64> = demands.iter().zip(&self.others).map(|(x, z)| x / z).collect();
        sum_excluding(&per_buyer)
            .into_iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s)
            .collect()
    }

    pub(crate) fn flows(&self, demands: &[f64]) -> FlowMatrix {
        FlowMatrix {
            demands: demands.to_vec(),
            weights: self.weights.clone(),
            others: self.others.clone(),
        }
    }

    /// Average price paid by agent `i`, `sum_j r_ij phi_j`.
    pub(crate) fn purchase_price(&self, i: usize) -> f64 {
        self.others_weighted[i] / self.others[i]
    }

    pub(crate) fn target_price(&self, i: usize, demands: &[f64], capacity: f64, v: f64) -> Result<f64, MarketError> {
        let n = self.prices.len();
        let wi = self.weights[i];
        let mut inflow = 0.0;
        let mut messages = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let r = wi / self.others[j];
            inflow += demands[j] * r;
            messages += bargaining_message(demands[j], r);
        }
        if !(messages > 0.0) {
            return Err(MarketError::NoDemandSignal { agent: i });
        }
        let first = inflow / (self.beta * messages);
        let purchase = self.purchase_price(i);
        if v > 0.0 {
            return Ok(first + demand_slope(inflow - capacity, v) * purchase);
        }

        // v = 0: solve sales(p) = capacity on [first, first + purchase].
        let excluded: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { (self.others[j] - wi).max(0.0) }).collect();
        let beta = self.beta;
        let reference = self.reference;
        let excess = |p: f64| -> (f64, f64) {
            let omega = (-beta * (p - reference)).exp();
            let mut sales = 0.0;
            let mut slope = 0.0;
            for j in 0..n {
                if j == i || demands[j] == 0.0 {
                    continue;
                }
                let denom = excluded[j] + omega;
                sales += demands[j] * omega / denom;
                slope -= demands[j] * excluded[j] * beta * omega / (denom * denom);
            }
            (sales - capacity, slope)
        };
        let (lo, hi) = (first, first + purchase);
        if excess(lo).0 <= 0.0 {
            return Ok(lo);
        }
        if excess(hi).0 >= 0.0 {
            return Ok(hi);
        }
        Ok(bracketed_newton_decreasing(excess, lo, hi, 1e-14 * hi.abs().max(1.0)))
    }
}

/// `out[i] = sum_{k != i} values[k]` from prefix and suffix sums.
fn sum_excluding(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + values[k];
    }
    let mut out = vec![0.0; n];
    let mut suffix = 0.0;
    for k in (0..n).rev() {
        out[k] = prefix[k] + suffix;
        suffix += values[k];
    }
    out
}
