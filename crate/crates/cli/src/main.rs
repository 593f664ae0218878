use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chillplan_cli::commands::{self, Paths};
use chillplan_cli::config::RunConfig;
use clap::{Args, Parser, Subcommand};

/// Price-aware chiller scheduling: fit price regimes, plan, simulate, compare.
#[derive(Debug, Parser)]
#[command(name = "chillplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regime model to read instead of <out>/regime_model.json.
    #[arg(long)]
    regime_model: Option<PathBuf>,
    /// Transition model to read instead of <out>/transition_model.json.
    #[arg(long)]
    transition_model: Option<PathBuf>,
    /// Policy to read instead of <out>/policy.json.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit quantile regime boundaries to the training prices.
    FitQfr(Common),
    /// Estimate hour-of-day x month transition matrices between regimes.
    EstimateChain(Common),
    /// Solve the occupancy LP and write the cyclic policy.
    Plan(Common),
    /// Roll the configured controllers out over the simulation windows.
    Simulate(Common),
    /// Tabulate simulated costs against the baseline controller.
    Compare(Common),
    /// Write plot-ready CSVs from the fitted models, policy and simulations.
    ExportPlotData(Common),
}

fn setup(common: &Common) -> Result<(RunConfig, Paths)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    let mut paths = Paths::new(&cfg.out_dir);
    if let Some(p) = &common.regime_model {
        paths.regime_model = p.clone();
    }
    if let Some(p) = &common.transition_model {
        paths.transition_model = p.clone();
    }
    if let Some(p) = &common.policy {
        paths.policy = p.clone();
    }
    Ok((cfg, paths))
}

type Stage = fn(&RunConfig, &Paths) -> Result<()>;

fn run(cli: Cli) -> Result<()> {
    let (common, stage): (&Common, Stage) = match &cli.command {
        Command::FitQfr(c) => (c, commands::fit_qfr),
        Command::EstimateChain(c) => (c, commands::estimate_chain),
        Command::Plan(c) => (c, commands::plan),
        Command::Simulate(c) => (c, commands::simulate),
        Command::Compare(c) => (c, commands::compare_cmd),
        Command::ExportPlotData(c) => (c, commands::export_plot_data),
    };
    let (cfg, paths) = setup(common)?;
    stage(&cfg, &paths)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
