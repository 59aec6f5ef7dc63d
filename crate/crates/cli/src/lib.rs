//! `holeburn` command line: simulate and fit hole-burning spectra, fit
//! saturation series, lifetimes and spin T1, and plan cavities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use commands::Report;

#[derive(Debug, Parser)]
#[command(name = "holeburn", version, about = "Spectral hole-burning simulation, fitting and cavity planning")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for curves and result files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for any generated noise or counts.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the spectra described by --config.
    Simulate,
    /// Global fit of scan CSVs with the three-level model of --config.
    Fit {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
    },
    /// Fit hole width against total power.
    Saturation { file: PathBuf },
    /// Visibility, Purcell factor and Q table.
    Plan(commands::PlanArgs),
    /// Fit an excited-state decay.
    Lifetime(commands::LifetimeArgs),
    /// Fit spin T1 from polarization ratios against dark time.
    T1(commands::T1Args),
    /// Coupling-weighted ensemble Purcell factor from three field maps.
    PurcellAvg { purcell: PathBuf, coupling: PathBuf, intensity: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit { .. } => "fit",
            Command::Saturation { .. } => "saturation",
            Command::Plan(_) => "plan",
            Command::Lifetime(_) => "lifetime",
            Command::T1(_) => "t1",
            Command::PurcellAvg { .. } => "purcell_avg",
        }
    }
}

/// Runs one command and returns what should go to stdout.
pub fn run(cli: &Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out.as_deref();
    let curves = out.unwrap_or_else(|| std::path::Path::new("."));
    let config = cli.config.as_deref();
    let report = match &cli.command {
        Command::Simulate => commands::simulate(config, curves, cli.seed)?,
        Command::Fit { scans } => commands::fit(config, curves, scans)?,
        Command::Saturation { file } => commands::saturation(file)?,
        Command::Plan(a) => commands::plan(a)?,
        Command::Lifetime(a) => commands::lifetime(a, out, cli.seed)?,
        Command::T1(a) => commands::t1(a, out, cli.seed)?,
        Command::PurcellAvg { purcell, coupling, intensity } => commands::purcell_avg(purcell, coupling, intensity)?,
    };
    let json = output::to_json(&report.json)?;
    if let Some(dir) = out {
        if !matches!(cli.command, Command::Simulate | Command::Fit { .. }) {
            output::write(dir, &format!("{}.json", cli.command.name()), &json)?;
        }
    }
    Ok(report.text.unwrap_or(json))
}
