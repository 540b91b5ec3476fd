//! `proxyrecon`: proxy network screening, reconstructions, coefficient
//! ensembles, hold-out validation and pseudoproxy benchmarks.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{parse_key_values, KeyFlags, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<proxyrecon::proxy::ProxyError> for CliError {
    fn from(e: proxyrecon::proxy::ProxyError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<proxyrecon::recon::FitError> for CliError {
    fn from(e: proxyrecon::recon::FitError) -> Self {
        use proxyrecon::recon::FitError;
        match e {
            FitError::InvalidParameter(_) | FitError::MissingData(_) | FitError::Series(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<proxyrecon::pseudoproxy::PseudoproxyError> for CliError {
    fn from(e: proxyrecon::pseudoproxy::PseudoproxyError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<proxyrecon::skill::SkillError> for CliError {
    fn from(e: proxyrecon::skill::SkillError) -> Self {
        use proxyrecon::skill::SkillError;
        match e {
            SkillError::InvalidBlock(_) => CliError::Input(e.to_string()),
            SkillError::Fit { start, end, source } => match CliError::from(source) {
                CliError::Input(m) => CliError::Input(format!("block {start}-{end}: {m}")),
                CliError::Numerical(m) => CliError::Numerical(format!("block {start}-{end}: {m}")),
            },
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<proxyrecon::uncertainty::UncertaintyError> for CliError {
    fn from(e: proxyrecon::uncertainty::UncertaintyError) -> Self {
        use proxyrecon::uncertainty::UncertaintyError;
        match e {
            UncertaintyError::SingularFit => CliError::Numerical(e.to_string()),
            UncertaintyError::Fit(f) => f.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "proxyrecon", version, about = "Multiproxy temperature reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Load a network, drop under-replicated tree rings and flagged records.
    Screen(RunArgs),
    /// Calibrate one method and reconstruct the target over the window.
    Reconstruct(RunArgs),
    /// Coefficient ensemble of a principal-component regression.
    Ensemble(RunArgs),
    /// Score methods on replicate pseudoproxy networks.
    Benchmark(RunArgs),
    /// Hold-out validation inside the calibration period.
    Validate(RunArgs),
    /// Loess-smooth a `year,value` series.
    Smooth(RunArgs),
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            parse_key_values(&text, &path.display().to_string())?
        }
        None => Default::default(),
    };
    RunConfig::resolve(file, &args.keys)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, f): (&RunArgs, fn(RunConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Screen(a) => (a, commands::screen),
        Command::Reconstruct(a) => (a, commands::reconstruct),
        Command::Ensemble(a) => (a, commands::ensemble),
        Command::Benchmark(a) => (a, commands::benchmark),
        Command::Validate(a) => (a, commands::validate),
        Command::Smooth(a) => (a, commands::smooth),
    };
    let cfg = load_config(args)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.output_dir.display())))?;
    f(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("proxyrecon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
