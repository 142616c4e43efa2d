//! Agent-based commodity pricing on fully connected trading networks.
//!
//! Agents hold signed capacities (production when positive, consumption when
//! negative), buy from each other through softmin purchase fractions and set
//! their prices to minimise their net cost. The crate covers four layers:
//!
//! - [`market`]: the per-agent equations (smoothed demand, purchase fractions,
//!   net cost, bargaining messages and the best-response price update);
//! - [`simulator`]: damped best-response dynamics to a Nash equilibrium and
//!   capacity-binned statistics over random markets;
//! - [`meanfield`]: the self-consistent large-market solution, agent classes,
//!   the purchasing-price curve and its turning point;
//! - [`elasticity`] and [`ingest`]: the stocks-to-use (SUR) elasticity
//!   pipeline for yearly or quarterly commodity data.
//!
//! [`plot`] renders deterministic SVG charts of all of the above.

pub mod dist;
pub mod elasticity;
pub mod ingest;
pub mod market;
pub mod meanfield;
pub mod numeric;
pub mod plot;
pub mod simulator;

pub use dist::CapacityDist;
pub use elasticity::{CommoditySeries, EmpiricalElasticityCurve, Period, Record, RescaleFit, YieldReport};
pub use market::{MarketConfig, MarketState};
pub use meanfield::{AgentClassification, MeanFieldSolution, PriceCurve};
pub use simulator::{BinnedStatistics, EquilibriumReport, SimulationConfig};
