//! `casimir`: simulate, calibrate, compute theory and compare.

// Guards like `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use casimir_core::CompensationMode;

#[derive(Debug, Parser)]
#[command(name = "casimir", version, about = "Sphere-plate Casimir experiment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the configuration)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the configuration)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CompensationArg {
    Zero,
    Mean,
}

impl From<CompensationArg> for CompensationMode {
    fn from(c: CompensationArg) -> Self {
        match c {
            CompensationArg::Zero => CompensationMode::Zero,
            CompensationArg::Mean => CompensationMode::Mean,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate calibration sweeps and the fixed-voltage pressure run
    Simulate(Common),
    /// Fit parabolas per position, then a0, C and the V0 line
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Sweep CSV (default: <out>/calibration_sweeps.csv)
        #[arg(long)]
        sweeps: Option<PathBuf>,
    },
    /// Lifshitz pressures for both low-frequency extrapolations
    Theory(Common),
    /// Extract the pressure, apply the error budget and compare with theory
    Report {
        #[command(flatten)]
        common: Common,
        /// Fixed-voltage sweep CSV (default: <out>/pressure_sweeps.csv)
        #[arg(long)]
        sweeps: Option<PathBuf>,
        /// Calibration JSON (default: <out>/calibration.json)
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Use an `a_nm,P_Pa,sigma_Pa` curve instead of sweeps and calibration
        #[arg(long, conflicts_with_all = ["sweeps", "calibration"])]
        experiment: Option<PathBuf>,
        /// Compensation used in the electric/Casimir ratio table
        #[arg(long, value_enum)]
        compensation: Option<CompensationArg>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(common) => commands::simulate(&common),
        Command::Calibrate { common, sweeps } => commands::calibrate(&common, sweeps),
        Command::Theory(common) => commands::theory(&common),
        Command::Report { common, sweeps, calibration, experiment, compensation } => commands::report(
            &common,
            commands::ReportInputs { sweeps, calibration, experiment, compensation: compensation.map(Into::into) },
        ),
    };
    match result {
        Ok(()) => ExitCode::from(error::EXIT_OK as u8),
        Err(e) => {
            eprintln!("casimir: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
