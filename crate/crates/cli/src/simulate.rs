use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use turnpoint::market::{CapacitySampling, MarketConfig};
use turnpoint::meanfield::{solve_self_consistent, SolverOptions};
use turnpoint::numeric::median;
use turnpoint::simulator::{run_samples, verify_nash, BinSpec, Schedule};
use turnpoint::{BinnedStatistics, CapacityDist, SimulationConfig};

use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::{numerical, Outcome};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Synchronous,
    RandomSequential,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingArg {
    Stratified,
    Iid,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of agents per market.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub mean_capacity: f64,
    /// Width of the rectangular capacity distribution.
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, default_value_t = 0.0)]
    pub inventory: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub updates_per_step: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::RandomSequential)]
    pub schedule: ScheduleArg,
    #[arg(long, value_enum, default_value_t = SamplingArg::Stratified)]
    pub sampling: SamplingArg,
    #[arg(long, default_value_t = 20)]
    pub capacity_bins: usize,
    #[arg(long, default_value_t = 40)]
    pub price_bins: usize,
    /// Upper edge of the price histogram; defaults to the large-market price band plus a margin.
    #[arg(long)]
    pub price_max: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct BinSummary {
    capacity_lo: f64,
    capacity_hi: f64,
    observations: u64,
    mean_price: Option<f64>,
    median_price: Option<f64>,
    mean_cost: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    samples: usize,
    converged_samples: usize,
    excluded_samples: usize,
    agents_binned: u64,
    steps_min: Option<usize>,
    steps_median: Option<f64>,
    steps_max: Option<usize>,
    max_price_residual: f64,
    max_nash_residual: f64,
    mean_field_phi_p: Option<f64>,
    mean_field_y: Option<f64>,
    bins: Vec<BinSummary>,
}

pub fn run(a: &SimulateArgs) -> Result<Outcome> {
    if a.capacity_bins == 0 || a.price_bins == 0 {
        bail!("--capacity-bins and --price-bins must be positive");
    }
    if !(a.width > 0.0) {
        bail!("--width must be positive");
    }
    let dist = CapacityDist::Rectangular {
        mean: a.mean_capacity,
        width: a.width,
    };
    let market = MarketConfig {
        n_agents: a.n,
        beta: a.beta,
        inventory: a.inventory,
        capacity: dist.clone(),
        sampling: match a.sampling {
            SamplingArg::Stratified => CapacitySampling::Stratified,
            SamplingArg::Iid => CapacitySampling::Iid,
        },
    };
    market.validate()?;
    let sim = SimulationConfig {
        eta: a.eta,
        epsilon: a.epsilon,
        updates_per_step: a.updates_per_step,
        max_steps: a.max_steps,
        convergence_tol: a.tol,
        seed: a.seed,
        schedule: match a.schedule {
            ScheduleArg::Synchronous => Schedule::Synchronous,
            ScheduleArg::RandomSequential => Schedule::RandomSequential,
        },
        ..SimulationConfig::default()
    };
    sim.validate()?;
    if a.samples == 0 {
        bail!("--samples must be at least 1");
    }

    // the reference solution only exists for beta = 1 markets with consumers
    let reference = (a.beta == 1.0)
        .then(|| solve_self_consistent(&dist, a.inventory, &SolverOptions::default()).ok())
        .flatten();
    let price_max = match a.price_max {
        Some(p) if p > 0.9 => p,
        Some(p) => bail!("--price-max must exceed 0.9, got {p}"),
        None => reference.as_ref().map_or(5.0, |s| (1.0 + s.phi_p + 0.5).ceil()),
    };
    let (lo, hi) = dist.support();
    let bins = BinSpec::uniform(&market, a.capacity_bins, a.price_bins, price_max, price_max * lo.abs().max(hi.abs()));

    let reports = run_samples(&market, &sim, a.samples).map_err(|e| numerical(e.to_string()))?;
    let stats = BinnedStatistics::from_reports(&reports, &bins)?;

    ensure_dir(&a.out_dir)?;
    let prices = a.out_dir.join("prices.csv");
    let costs = a.out_dir.join("costs.csv");
    let report_path = a.out_dir.join("report.json");
    write_histogram(&prices, "price", &stats.capacity_bin_edges, &stats.price_bin_edges, &stats.price_histogram)?;
    write_histogram(&costs, "cost", &stats.capacity_bin_edges, &stats.cost_bin_edges, &stats.cost_histogram)?;

    let converged: Vec<_> = reports.iter().filter(|r| r.converged).collect();
    let mut steps: Vec<usize> = converged.iter().map(|r| r.sweeps_used).collect();
    steps.sort_unstable();
    let mut nash = 0.0f64;
    for r in &converged {
        nash = nash.max(verify_nash(&r.final_state, &market, f64::INFINITY)?.max_residual);
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); a.capacity_bins];
    for &(c, p, _) in &stats.agents {
        let e = &stats.capacity_bin_edges;
        if c >= e[0] && c <= e[e.len() - 1] {
            let k = e.partition_point(|x| *x <= c).saturating_sub(1).min(a.capacity_bins - 1);
            per_bin[k].push(p);
        }
    }
    let means = stats.mean_prices();
    let costs_mean = stats.mean_costs();
    let report = Report {
        samples: reports.len(),
        converged_samples: converged.len(),
        excluded_samples: stats.excluded_samples,
        agents_binned: stats.total_observations(),
        steps_min: steps.first().copied(),
        steps_median: median(&steps.iter().map(|s| *s as f64).collect::<Vec<_>>()),
        steps_max: steps.last().copied(),
        max_price_residual: reports.iter().map(|r| r.max_price_residual).fold(0.0, f64::max),
        max_nash_residual: nash,
        mean_field_phi_p: reference.as_ref().map(|s| s.phi_p),
        mean_field_y: reference.as_ref().map(|s| s.y),
        bins: (0..a.capacity_bins)
            .map(|k| BinSummary {
                capacity_lo: stats.capacity_bin_edges[k],
                capacity_hi: stats.capacity_bin_edges[k + 1],
                observations: stats.observations[k],
                mean_price: means[k],
                median_price: median(&per_bin[k]),
                mean_cost: costs_mean[k],
            })
            .collect(),
    };
    write_json(&report_path, &report)?;

    let failure = (stats.excluded_samples > 0).then(|| {
        format!(
            "{} of {} samples did not converge within {} steps; they are excluded from the histograms",
            stats.excluded_samples, a.samples, a.max_steps
        )
    });
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec![prices, costs, report_path],
        seed: Some(a.seed),
        failure,
    })
}

fn write_histogram(path: &std::path::Path, what: &str, cap_edges: &[f64], edges: &[f64], hist: &[Vec<u64>]) -> Result<()> {
    let header = [
        "capacity_bin".to_string(),
        "capacity_lo".into(),
        "capacity_hi".into(),
        format!("{what}_bin"),
        format!("{what}_lo"),
        format!("{what}_hi"),
        "count".into(),
    ];
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for (i, row) in hist.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                num(cap_edges[i]),
                num(cap_edges[i + 1]),
                j.to_string(),
                num(edges[j]),
                num(edges[j + 1]),
                c.to_string(),
            ]);
        }
    }
    write_csv(path, &header, rows)
}
