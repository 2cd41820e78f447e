//! Command-line driver: parse a run configuration, dispatch to the library,
//! emit CSV/JSON outputs. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CmdError, CommonArgs};
use config::RunConfig;
use output::Format;

#[derive(Parser)]
#[command(name = "qbm2", about = "Two Brownian oscillators in a common harmonic bath")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the configured output stride.
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Oracle comparison threshold override.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Table output format.
    #[arg(long, global = true, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Master-equation coefficient trajectory.
    Coeffs,
    /// Gaussian-state evolution.
    Evolve,
    /// EPR-variance separability series and disentanglement time.
    Entangle,
    /// Uncertainty product with weak-damping closed-form columns.
    Uncertainty,
    /// Superposition decoherence: density slices, visibility, purity.
    Decohere,
    /// Exact finite-bath reference; optionally compare the master route.
    Oracle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::from_path(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let args = CommonArgs {
        out_dir: &cli.out,
        stride: cli.stride,
        threshold: cli.threshold,
        format: cli.format,
    };
    let result = match cli.command {
        Command::Coeffs => commands::cmd_coeffs(&cfg, &args),
        Command::Evolve => commands::cmd_evolve(&cfg, &args),
        Command::Entangle => commands::cmd_entangle(&cfg, &args),
        Command::Uncertainty => commands::cmd_uncertainty(&cfg, &args),
        Command::Decohere => commands::cmd_decohere(&cfg, &args),
        Command::Oracle => commands::cmd_oracle(&cfg, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CmdError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CmdError::Run(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
