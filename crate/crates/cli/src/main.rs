use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use llab_core::Error;

mod commands;
mod output;
mod verify;

#[derive(Parser, Debug)]
#[command(name = "llab", version, about = "Solver and estimate checker for widely degenerate parabolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve along the epsilon schedule and dump the solutions.
    Solve(SolveArgs),
    /// Evaluate the estimates on the artifacts of a previous solve.
    Verify(VerifyArgs),
    /// Randomized sweeps of the structural inequalities and lemmas.
    Props(PropsArgs),
    /// Solve a gas filtration scenario given in physical units.
    Filtration(FiltrationArgs),
    /// Render a binary field dump as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for randomized checks; overrides the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated estimate names; all by default.
    #[arg(long, value_delimiter = ',')]
    pub estimates: Vec<String>,
    /// Number of cylinders in the family; overrides the config.
    #[arg(long)]
    pub family: Option<usize>,
    /// Run the solve first instead of loading its artifacts.
    #[arg(long)]
    pub solve: bool,
}

#[derive(Args, Debug)]
pub struct PropsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Random pairs per (p, nu, n) combination.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub nu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct FiltrationArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// An LLAB1 field dump.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Time level; the last one by default.
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub title: Option<String>,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    /// The run completed but a check did not hold.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::StepFailure { .. } | Error::Linear(_) | Error::SingularPoint { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Verify(a) => verify::verify(a),
        Command::Props(a) => commands::props(a),
        Command::Filtration(a) => commands::filtration(a),
        Command::Plot(a) => commands::plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}
