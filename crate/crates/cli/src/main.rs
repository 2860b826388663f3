//! `tsa`: batch front end for the tree-structure optimal control solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError, RawConfig};
use tsa::TsaError;

#[derive(Parser)]
#[command(
    name = "tsa",
    version,
    about = "Tree-structure dynamic programming for optimal control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the tree, solve, synthesize the feedback and write CSVs.
    Solve(RunArgs),
    /// Error and order table over a list of time steps (`dts=`).
    Convergence(RunArgs),
    /// Per-level errors of pruned and unpruned trees against a reference.
    Compare(RunArgs),
}

fn load(args: &RunArgs) -> Result<Config, ConfigError> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for pair in &args.overrides {
        raw.set_pair(pair)?;
    }
    Config::from_raw(&raw)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<TsaError>() {
        Some(TsaError::InvalidArgument(_) | TsaError::Dimension { .. }) => 2,
        Some(TsaError::NonFinite { .. } | TsaError::NonFiniteValue(_) | TsaError::Singular(_)) => 3,
        Some(TsaError::NodeCap { .. } | TsaError::EnumerationCap { .. } | TsaError::Overflow(_)) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, which) = match &cli.command {
        Command::Solve(a) => (a, "solve"),
        Command::Convergence(a) => (a, "convergence"),
        Command::Compare(a) => (a, "compare"),
    };
    let cfg = load(args)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let report = match which {
        "solve" => commands::solve(&cfg)?,
        "convergence" => commands::convergence(&cfg)?,
        _ => commands::compare(&cfg)?,
    };
    print!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
