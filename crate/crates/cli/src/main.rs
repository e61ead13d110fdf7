//! `fairthresh`: pick group-specific decision thresholds that trade lending
//! utility against group fairness.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error,
//! 3 inconsistent ratings.

mod args;
mod commands;
mod interactive;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{EvaluateArgs, GenerateArgs, OptimizeArgs, SampleArgs, ServeArgs, WeightsArgs};

#[derive(Debug, Parser)]
#[command(name = "fairthresh", version, about = "Fairness-aware threshold selection")]
struct Cli {
    /// Print machine-readable JSON on stdout instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scored cohort to CSV.
    Generate(GenerateArgs),
    /// Metrics of one threshold pair.
    Evaluate(EvaluateArgs),
    /// Sample the fairness-utility cloud to CSV.
    Sample(SampleArgs),
    /// AHP weights from pairwise ratings.
    Weights(WeightsArgs),
    /// Search thresholds minimizing the preference-weighted objective.
    Optimize(OptimizeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Inconsistent(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Inconsistent(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Inconsistent(m) | CliError::Runtime(m) => m,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let outcome = match cli.command {
        Command::Generate(a) => commands::generate(a, json),
        Command::Evaluate(a) => commands::evaluate(a, json),
        Command::Sample(a) => commands::sample(a, json),
        Command::Weights(a) => commands::weights(a, json),
        Command::Optimize(a) => commands::optimize(a, json),
        Command::Serve(a) => commands::serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
