//! `dqd`: forward simulation, synthetic data and rate fits for a pulsed
//! double-dot charge qubit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dqd_core::{DataError, DynamicsError, InferenceError, ParamError};

use commands::UsageError;

#[derive(Parser, Debug)]
#[command(name = "dqd", version, about)]
struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named parameter preset applied under the config file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate J(ω) and Γ_r(ε).
    Spectral {
        /// Check the ω⁵ low-frequency law of the microscopic model.
        #[arg(long)]
        check_omega5: bool,
    },
    /// Occupancy and differential maps on the configured grid.
    Simulate,
    /// Noisy differential maps in the format `fit` reads.
    Synth,
    /// Fit Γ_r(ε) with confidence bands to differential maps, one file per
    /// configured toggle amplitude in the same order.
    Fit {
        #[arg(required = true)]
        data: Vec<PathBuf>,
        /// Also fit the phenomenological (s, α, ω_c) to the rate curve.
        #[arg(long)]
        phenom: bool,
        /// Also fit the dot geometry (E₀, L) to the smoothed occupancy.
        #[arg(long)]
        micro: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::usage(e.into()))?;
    }
    let cfg = config::load(cli.config.as_deref(), cli.preset.as_deref(), cli.seed, std::env::vars())
        .map_err(commands::usage)?;
    commands::write_resolved(&cfg, &cli.out)?;
    match cli.command {
        Command::Spectral { check_omega5 } => commands::spectral(&cfg, &cli.out, check_omega5),
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Synth => commands::synth(&cfg, &cli.out),
        Command::Fit { data, phenom, micro } => commands::fit(&cfg, &cli.out, &data, phenom, micro),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() || cause.is::<ParamError>() {
            return 2;
        }
        if cause.is::<DataError>() {
            return 4;
        }
        if let Some(err) = cause.downcast_ref::<InferenceError>() {
            return match err {
                InferenceError::NotConverged { .. } | InferenceError::NormalizationInfeasible { .. } => 3,
                InferenceError::GridMismatch(_) => 4,
                InferenceError::Param(_) => 2,
                _ => 1,
            };
        }
        if let Some(DynamicsError::Param(_)) = cause.downcast_ref::<DynamicsError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(InferenceError::NotConverged {
                iterations,
                objective,
                gradient_norm,
                ..
            }) = e.chain().find_map(|c| c.downcast_ref::<InferenceError>())
            {
                eprintln!("  iterations {iterations}, objective {objective:e}, gradient norm {gradient_norm:e}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
