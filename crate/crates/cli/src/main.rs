//! `ouq`: command-line front end for the modulated-queue toolkit.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use manifest::OutputDir;

/// Failure classes, mapped to exit codes 2 (config), 1 (everything else).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ouqueue::Error> for CliError {
    fn from(e: ouqueue::Error) -> Self {
        use ouqueue::Error::*;
        match e {
            InvalidParam { .. } | InvalidKind(_) | UnboundedModulator | Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ouq",
    version,
    about = "M/M/1 queue with an Ornstein-Uhlenbeck modulated service rate"
)]
struct Cli {
    /// JSON config; the built-in sigma = 2, eps = 1e-4 setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `simulate.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `expand.order`.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Suppress terminal output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Report the sufficient conditions on eps.
    Check,
    /// Perturbation series terms and partial sums.
    Expand,
    /// The error bound E_B and its parts.
    Bounds,
    /// Stationary law of the discretised joint chain.
    Oracle,
    /// Event-driven simulation with batch-means errors.
    Simulate,
    /// Series vs oracle (vs simulation) on a u grid.
    Validate {
        /// Add the simulation column.
        #[arg(long)]
        simulate: bool,
    },
    /// Data and a gnuplot script for both bound figures.
    Figures,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Expand => "expand",
            Command::Bounds => "bounds",
            Command::Oracle => "oracle",
            Command::Simulate => "simulate",
            Command::Validate { .. } => "validate",
            Command::Figures => "figures",
        }
    }
}

fn load(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::figure_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
    }
    if let Some(order) = cli.order {
        cfg.expand.order = order;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = load(cli)?;
    let name = cli.command.name();
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(name));
    let uses_seed = matches!(cli.command, Command::Simulate | Command::Validate { simulate: true })
        || matches!(cli.command, Command::Validate { .. }) && cfg.validate.simulate;
    let canonical = serde_json::to_string(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
    let mut out = OutputDir::create(&out_dir, name, &canonical, uses_seed.then_some(cfg.simulate.seed))?;
    let summary = match cli.command {
        Command::Check => commands::check(&cfg, &mut out)?,
        Command::Expand => commands::expand(&cfg, cfg.expand.order, &mut out)?,
        Command::Bounds => commands::bounds(&cfg, &mut out)?,
        Command::Oracle => commands::oracle(&cfg, &mut out)?,
        Command::Simulate => commands::simulate(&cfg, &mut out)?,
        Command::Validate { simulate } => commands::validate(&cfg, simulate || cfg.validate.simulate, &mut out)?,
        Command::Figures => commands::figures(&cfg, &mut out)?,
    };
    let manifest = out.finish()?;
    Ok(format!(
        "{summary}\n{} files written to {}",
        manifest.outputs.len() + 1,
        out_dir.display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ouq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
