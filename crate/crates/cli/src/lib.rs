//! Command-line pipeline: simulate, fit, average, predict, and report.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use convmove::io::Manifest;

pub use commands::Ctx;
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "convmove",
    version,
    about = "Movement models with time-warped convolution kernels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $CONVMOVE_RUN_DIR/<command>, else ./runs/<command>].
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct WithInput {
    #[command(flatten)]
    pub common: Common,
    /// Output directory of the preceding stage.
    #[arg(long)]
    pub from: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate telemetry from the `[simulate]` section.
    Simulate(Common),
    /// Screen warp candidates and fit each retained model per individual.
    Fit(Common),
    /// Fit the latent-space network model to all individuals jointly.
    FitNetwork(Common),
    /// Posterior model probabilities and the averaged warp derivative.
    Bma(WithInput),
    /// Model-averaged trajectory prediction.
    Predict(WithInput),
    /// Degree curves, mean weights, and the uncertainty comparison.
    Degree(WithInput),
    /// Plot-ready tables and SVG charts from any earlier output directory.
    Report(WithInput),
    /// Print the default configuration.
    DefaultConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::FitNetwork(_) => "fit-network",
            Command::Bma(_) => "bma",
            Command::Predict(_) => "predict",
            Command::Degree(_) => "degree",
            Command::Report(_) => "report",
            Command::DefaultConfig => "default-config",
        }
    }
}

fn context(name: &str, common: &Common, from: Option<PathBuf>) -> Result<Ctx> {
    let (config, config_text) = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), String::new()),
    };
    let out = common.out.clone().unwrap_or_else(|| {
        std::env::var_os("CONVMOVE_RUN_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name)
    });
    Ok(Ctx {
        config,
        config_text,
        config_path: common.config.clone(),
        out,
        from,
    })
}

/// Run one parsed command. Returns the manifest of the output directory.
pub fn run(cli: Cli) -> Result<Option<Manifest>> {
    let name = cli.command.name();
    let manifest = match &cli.command {
        Command::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml()?);
            return Ok(None);
        }
        Command::Simulate(c) => commands::simulate(&context(name, c, None)?)?,
        Command::Fit(c) => commands::fit(&context(name, c, None)?)?,
        Command::FitNetwork(c) => commands::fit_network(&context(name, c, None)?)?,
        Command::Bma(w) => commands::bma(&context(name, &w.common, Some(w.from.clone()))?)?,
        Command::Predict(w) => commands::predict(&context(name, &w.common, Some(w.from.clone()))?)?,
        Command::Degree(w) => commands::degree(&context(name, &w.common, Some(w.from.clone()))?)?,
        Command::Report(w) => commands::report(&context(name, &w.common, Some(w.from.clone()))?)?,
    };
    Ok(Some(manifest))
}
