//! Command-line front end: training, evaluation, sweeps, ablations, ν audits
//! and boundary exports.

mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::EvalSet;
use config::{Format, RunConfig};

#[derive(Parser)]
#[command(
    name = "marginsphere",
    version,
    about = "Hypersphere anomaly detection"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the training, split and data generation seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one detector and write the run directory.
    Train,
    /// Score a split (or a CSV file) with a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        set: EvalSet,
        /// Evaluate this CSV file instead of a split of the configured data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Grid search over (ν, ν₁, ν₂), selecting by validation AUC.
    Sweep,
    /// Compare all variants over several seeds.
    Ablate,
    /// Check the ν-property on the training split.
    Audit {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Train and audit every point of the sweep grid.
        #[arg(long)]
        grid: bool,
    },
    /// Write the score field, sphere circles, points and distance histogram.
    ExportBoundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// Padding around the data, as a fraction of its extent.
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
        #[arg(long, value_enum, default_value = "test")]
        set: EvalSet,
    },
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("MARGINSPHERE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("MARGINSPHERE_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        anyhow::bail!("MARGINSPHERE_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(f) = &common.format {
        cfg.format = f.parse::<Format>()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Eval { model, set, data } => commands::eval(&cfg, &model, set, data.as_deref()),
        Command::Sweep => commands::sweep(&cfg),
        Command::Ablate => commands::ablate(&cfg),
        Command::Audit { model, grid } => commands::audit(&cfg, model.as_deref(), grid),
        Command::ExportBoundary {
            model,
            resolution,
            margin,
            set,
        } => commands::export(&cfg, &model, resolution, margin, set),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
