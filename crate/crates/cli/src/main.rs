mod analyze;
mod meanfield;
mod output;
mod plot;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "turnpoint", version, about = "Commodity market simulation, mean-field price curves and SUR elasticity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    #[command(flatten)]
    Job(Job),
    /// Re-run the job recorded in a manifest.json.
    Replay(ReplayArgs),
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Job {
    /// Relax random markets to equilibrium and histogram prices and costs by capacity.
    Simulate(simulate::SimulateArgs),
    /// Solve the large-market price curve over a grid of mean capacities.
    Meanfield(meanfield::MeanfieldArgs),
    /// Windowed SUR elasticity of a commodity series, with an optional model fit.
    Analyze(analyze::AnalyzeArgs),
    /// Render an SVG from the CSV output of another subcommand.
    Plot(plot::PlotArgs),
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Error whose exit code is 3: the inputs were fine but a computation failed.
#[derive(Debug)]
pub struct Numerical(pub String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

pub fn numerical(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Numerical(msg.into()))
}

/// What a job touched, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    /// Set when outputs were written but the run did not fully succeed.
    pub failure: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    job: Job,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started_unix: u64,
    wall_clock_seconds: f64,
}

impl Job {
    fn run(&self) -> Result<Outcome> {
        match self {
            Job::Simulate(a) => simulate::run(a),
            Job::Meanfield(a) => meanfield::run(a),
            Job::Analyze(a) => analyze::run(a),
            Job::Plot(a) => plot::run(a),
        }
    }

    fn manifest_path(&self) -> PathBuf {
        match self {
            Job::Simulate(a) => a.out_dir.join("manifest.json"),
            Job::Meanfield(a) => a.out_dir.join("manifest.json"),
            Job::Analyze(a) => a.out_dir.join("manifest.json"),
            Job::Plot(a) => a.output.with_extension("manifest.json"),
        }
    }

    fn redirect(&mut self, dir: &Path) {
        match self {
            Job::Simulate(a) => a.out_dir = dir.to_path_buf(),
            Job::Meanfield(a) => a.out_dir = dir.to_path_buf(),
            Job::Analyze(a) => a.out_dir = dir.to_path_buf(),
            Job::Plot(a) => a.output = dir.join(a.output.file_name().unwrap_or_default()),
        }
    }

    /// Makes input paths absolute so a manifest replays from any directory.
    fn absolutize(&mut self) -> Result<()> {
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(&*p).with_context(|| format!("resolving {}", p.display()))?;
            Ok(())
        };
        match self {
            Job::Analyze(a) => {
                abs(&mut a.input)?;
                if let Some(d) = a.deflator.as_mut() {
                    abs(d)?;
                }
            }
            Job::Plot(a) => {
                for p in &mut a.input {
                    abs(p)?;
                }
                for p in &mut a.fit {
                    abs(p)?;
                }
            }
            Job::Simulate(_) | Job::Meanfield(_) => {}
        }
        Ok(())
    }
}

fn execute(mut job: Job) -> Result<Option<String>> {
    job.absolutize()?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let t = Instant::now();
    let outcome = job.run()?;
    let manifest = Manifest {
        tool: "turnpoint".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        started_unix,
        wall_clock_seconds: t.elapsed().as_secs_f64(),
        job: job.clone(),
    };
    output::write_json(&job.manifest_path(), &manifest)?;
    Ok(outcome.failure)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("TURNPOINT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).with_context(|| format!("TURNPOINT_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Option<String>> {
    configure_threads()?;
    match cli.command {
        Top::Job(job) => execute(job),
        Top::Replay(r) => {
            let text = std::fs::read_to_string(&r.manifest).with_context(|| format!("reading {}", r.manifest.display()))?;
            let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", r.manifest.display()))?;
            if manifest.tool != "turnpoint" {
                bail!("{} was not written by turnpoint", r.manifest.display());
            }
            let mut job = manifest.job;
            if let Some(dir) = r.out_dir {
                job.redirect(&dir);
            }
            execute(job)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("error: {failure}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Numerical>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
