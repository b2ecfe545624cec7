//! Command-line driver for GEV-BMA and MSP-BMA ensemble analyses.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "extreme-bma", version, about = "Extreme-precipitation return levels by Bayesian model averaging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates per dataset.
    #[arg(long = "boot")]
    pub boot: Option<usize>,
    /// Return period in years; repeat for several.
    #[arg(long = "period")]
    pub periods: Vec<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit site-wise GEVs and a max-stable process to one dataset.
    Fit(Common),
    /// Run the model-averaging pipeline(s) over an ensemble.
    Bma(Common),
    /// Write a synthetic ensemble in the ingestion format.
    Simulate(Common),
    /// Extremal-coefficient and QQ diagnostics for a stored fit.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Fit written by `fit`; defaults to `<output>/msp_fit.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

pub fn resolve_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        boot: common.boot,
        periods: common.periods.clone(),
        output: common.output.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command; returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    match &cli.command {
        Command::Fit(c) => commands::cmd_fit(&resolve_config(c)?),
        Command::Bma(c) => commands::cmd_bma(&resolve_config(c)?),
        Command::Simulate(c) => commands::cmd_simulate(&resolve_config(c)?),
        Command::Diagnose { common, model } => commands::cmd_diagnose(&resolve_config(common)?, model.as_deref()),
    }
}
