//! Command-line front end. Exit codes: 0 success, 1 domain failure (invalid
//! scenario, solver failure, failed certificate), 2 usage or parse failure.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use fairtrade::pricing::PricingError;
use fairtrade::scenario::results::ResultsError;

pub use commands::run;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<ResultsError> for CliError {
    fn from(e: ResultsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<fairtrade::dispatch::DispatchError> for CliError {
    fn from(e: fairtrade::dispatch::DispatchError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        match e {
            PricingError::StepTooLarge { .. } => CliError::Usage(e.to_string()),
            e => CliError::Domain(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairtrade", version, about = "Peer-to-peer trading among energy hubs: equilibrium dispatch and fair prices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file; exit 1 when it has errors.
    Validate(Common),
    /// Non-trading cost of every hub.
    Baseline(Common),
    /// Solve the trading game at given prices.
    Dispatch(DispatchArgs),
    /// Cost reductions across several uniform prices.
    Sweep(SweepArgs),
    /// Search fair prices by mediated projected gradient.
    Mediate(MediateArgs),
    /// Construct prices under which no hub is worse off than without trading.
    Certificate(CertificateArgs),
    /// Write the synthetic scenarios.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Scenario file (JSON).
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Mode {
    Central,
    Admm,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Equilibrium solver.
    #[arg(long, value_enum, default_value = "central")]
    pub mode: Mode,
    /// ADMM penalty ρ (default: the scenario's).
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct DispatchArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `uniform:VALUE`, `zero` or `file:PATH` (CSV with `from,to,hour,price_chf_kWh`).
    #[arg(long, default_value = "uniform:0.18")]
    pub price: String,
    /// ADMM residual tolerance, kW.
    #[arg(long)]
    pub tol: Option<f64>,
    /// ADMM iteration limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated uniform prices, CHF/kWh.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.18,0.2")]
    pub prices: Vec<f64>,
    /// Trade invariance tolerance, kW.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Args, Clone)]
pub struct MediateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Starting prices, same forms as for `dispatch`.
    #[arg(long, default_value = "uniform:0.18")]
    pub price: String,
    /// Gradient step (default 1/L; must stay below 2/L).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Stop when |Δφ| ≤ tol·max(1, φ).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Mediation iteration limit [default: 5000]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Keep every hub at or below its non-trading cost.
    #[arg(long)]
    pub safeguard: bool,
}

#[derive(Debug, Args, Clone)]
pub struct CertificateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// One price per pair and hour instead of one per pair.
    #[arg(long)]
    pub hourly: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SynthArgs {
    /// Output directory for the scenario files.
    #[arg(long, default_value = "scenarios")]
    pub out: PathBuf,
    /// Seed of the synthetic demand and irradiance series.
    #[arg(long, default_value_t = fairtrade::scenario::synth::DEFAULT_SEED)]
    pub seed: u64,
}
