//! Experiment runner behind the `sparse-shield` binary.
//!
//! Subcommands:
//!
//! * `gen`: generate the dataset of a config into `<out>/dataset/`.
//! * `bounds`: evaluate the certificates, print a table and write
//!   `<out>/bounds.json`.
//! * `sweep`: attack both pipelines over the ε grid and write
//!   `<out>/sweep.csv`, `<out>/summary.json` and `<out>/bounds.json`, plus the
//!   report when `emit_plot` is set.
//! * `report`: render `<out>/report.svg` and `<out>/report.md` from a sweep
//!   table and a bounds file.
//!
//! Exit codes: 0 success, 1 I/O or other runtime failure, 2 configuration
//! error, 3 violated certificate premise, 4 solver non-convergence.

mod config;
mod experiment;
mod report;

pub use config::{AttackGrid, ExperimentConfig, PursuitConfig};
pub use experiment::{
    bound_marker, compute_bounds, run_sweep, summarize, BoundsOutput, LayerProfile, PipelineSummary, Problem,
    SweepResult, SweepSummary,
};
pub use report::{render_markdown, render_svg};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::attack::{read_sweep_csv, write_sweep_csv, AttackError};
use crate::bounds::{BoundReport, BoundsError};
use crate::model::ModelError;
use crate::pursuit::PursuitError;
use crate::synth::{SynthError, SyntheticProblem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible premise: {0}")]
    Premise(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Runtime(_) => 1,
            Self::Config(_) => 2,
            Self::Premise(_) => 3,
            Self::NotConverged(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(io) => io.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => io.into(),
            SynthError::Model(m) => m.into(),
            SynthError::Json(j) => j.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Premise(msg) => Self::Premise(msg),
            BoundsError::InvalidParameter(msg) => Self::Config(msg),
        }
    }
}

impl From<PursuitError> for CliError {
    fn from(e: PursuitError) -> Self {
        match e {
            e @ PursuitError::NotConverged { .. } => Self::NotConverged(e.to_string()),
            PursuitError::Model(m) => m.into(),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Pursuit(p) => p.into(),
            AttackError::Model(m) => m.into(),
            AttackError::Io(io) => io.into(),
            AttackError::Csv(c) => Self::Config(format!("sweep table: {c}")),
            other => Self::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sparse-shield", version, about = "Certified robustness of sparse-coding classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "SPARSE_SHIELD_SEED")]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset.
    Gen,
    /// Evaluate the robustness certificates.
    Bounds {
        /// Use a dataset written by `gen` instead of regenerating it.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Attack both pipelines over the ε grid.
    Sweep,
    /// Render the chart and markdown summary of a sweep.
    Report {
        /// Sweep table; defaults to `<out>/sweep.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Bounds file; defaults to `<out>/bounds.json`.
        #[arg(long)]
        bounds: Option<PathBuf>,
    },
}

/// Config with command-line overrides applied.
fn resolve(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.synth.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if common.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen => cmd_gen(&resolve(&cli.common)?),
        Command::Bounds { dataset } => cmd_bounds(&resolve(&cli.common)?, dataset.as_deref()).map(|_| ()),
        Command::Sweep => cmd_sweep(&resolve(&cli.common)?, cli.common.jobs).map(|_| ()),
        Command::Report { csv, bounds } => {
            let out = match (&cli.common.out, &cli.common.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => resolve(&cli.common)?.output_dir,
                (None, None) => return Err(CliError::Config("report needs --out or --config".into())),
            };
            let csv = csv.clone().unwrap_or_else(|| out.join("sweep.csv"));
            let bounds = bounds.clone().unwrap_or_else(|| out.join("bounds.json"));
            cmd_report(&csv, &bounds, &out)
        }
    }
}

pub fn cmd_gen(config: &ExperimentConfig) -> Result<(), CliError> {
    let dir = config.output_dir.join("dataset");
    match Problem::generate(config)? {
        Problem::Single(p) => p.save(&dir)?,
        Problem::Layered(p) => p.save(&dir)?,
    }
    log::info!("dataset written to {}", dir.display());
    Ok(())
}

pub fn cmd_bounds(config: &ExperimentConfig, dataset: Option<&Path>) -> Result<BoundsOutput, CliError> {
    let problem = match dataset {
        Some(dir) => {
            if config.stack.is_some() {
                return Err(CliError::Config("--dataset supports single-layer datasets only".into()));
            }
            Problem::Single(SyntheticProblem::load(dir)?)
        }
        None => Problem::generate(config)?,
    };
    let bounds = compute_bounds(&problem, config)?;
    print!("{}", bounds_table(&bounds));
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("bounds.json"), &bounds)?;
    Ok(bounds)
}

fn bounds_table(b: &BoundsOutput) -> String {
    let mut s = format!(
        "layers {}  mu {}  O* {:.6}  |w| {:.6}  k {}\n",
        b.depth,
        b.layers.iter().map(|l| format!("{:.6}", l.mu)).collect::<Vec<_>>().join(","),
        b.margin_star,
        b.w_norm,
        b.deepest_l0
    );
    s.push_str(&format!("{:<12} {:<11} {:>12} {:<10} schedule\n", "bound", "status", "eps_max", "norm"));
    let row = |r: &BoundReport, name: &str, values: &[f64]| {
        format!(
            "{:<12} {:<11} {:>12.6} {:<10} {name} = {}\n",
            r.bound_kind.label(),
            format!("{:?}", r.status).to_lowercase(),
            r.eps_max,
            serde_json::to_value(r.eps_norm).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
        )
    };
    s.push_str(&row(&b.thr, "beta", &b.thr_betas));
    s.push_str(&row(&b.bp, "xi", &b.bp_xis));
    for note in b.thr.notes.iter().chain(&b.bp.notes).chain(&b.notes) {
        s.push_str(&format!("note: {note}\n"));
    }
    s
}

/// Runs the sweep and writes its files. Non-converged solves are reported
/// after all outputs are written.
pub fn cmd_sweep(config: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult, CliError> {
    let started = std::time::Instant::now();
    let problem = Problem::generate(config)?;
    let result = run_sweep(&problem, config, jobs)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    write_sweep_csv(fs::File::create(out.join("sweep.csv"))?, &result.rows)?;
    write_json(&out.join("summary.json"), &result.summary)?;
    write_json(&out.join("bounds.json"), &result.bounds)?;
    if config.emit_plot {
        write_report(&result.rows, &result.bounds, out)?;
    }
    log::info!("sweep finished in {:.1}s", started.elapsed().as_secs_f64());
    let stuck: usize = result.stats.iter().map(|s| s.nonconverged_runs + s.approximate_gradients).sum();
    if stuck > 0 {
        return Err(CliError::NotConverged(format!("{stuck} basis-pursuit solves hit the iteration cap")));
    }
    Ok(result)
}

fn write_report(rows: &[crate::attack::SweepRow], bounds: &BoundsOutput, out: &Path) -> Result<(), CliError> {
    fs::write(out.join("report.svg"), render_svg(rows, bounds)?)?;
    fs::write(out.join("report.md"), render_markdown(rows, bounds)?)?;
    Ok(())
}

pub fn cmd_report(csv: &Path, bounds: &Path, out: &Path) -> Result<(), CliError> {
    let file = fs::File::open(csv).map_err(|e| CliError::Config(format!("cannot open {}: {e}", csv.display())))?;
    let rows = read_sweep_csv(file)?;
    let text = fs::read_to_string(bounds).map_err(|e| CliError::Config(format!("cannot read {}: {e}", bounds.display())))?;
    let bounds: BoundsOutput = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bounds file: {e}")))?;
    fs::create_dir_all(out)?;
    write_report(&rows, &bounds, out)
}
