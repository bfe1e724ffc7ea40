//! Command-line front end: problem files in, JSON result documents and CSV
//! traces out.
//!
//! Exit codes: 0 ok, 1 input error, 2 infeasible design, 3 inclusion or
//! verification failure.

pub mod commands;
pub mod corpus;
pub mod problem;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use obsynth_core::{AnalysisError, LinalgError, SimulationError, SynthesisError};
use thiserror::Error;

pub use problem::{Plant, ProblemClass, ProblemFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Parser)]
#[command(name = "obsynth", version, about = "Optimal peak-to-peak interval observer synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the observer design program and certify the result.
    Design(CommonArgs),
    /// Peak-to-peak gain of the error dynamics for a given gain.
    Gain(GainArgs),
    /// Simulate plant and interval observers; CSV goes to --out or stdout.
    Simulate(CommonArgs),
    /// Design (or take the file's gain), certify, simulate and compare.
    Check(CommonArgs),
    /// Run the benchmark corpus against its stored expected values.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    pub input: PathBuf,
    /// Strictness margin for the design program.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Output path for the result document or trace.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output weight M: `I`, `ones`, or a JSON matrix. Defaults to `I`.
    #[arg(long = "output-matrix")]
    pub output_matrix: Option<String>,
    /// Feedthrough weight N: `zeros`, `ones`, or a JSON matrix. Defaults to zeros.
    #[arg(long)]
    pub feedthrough: Option<String>,
    /// Observer gain L as a JSON matrix; a flat array is a column.
    #[arg(long)]
    pub gain: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Corpus manifest or the directory holding `manifest.json`.
    pub input: Option<PathBuf>,
    /// Run only the case with this name, or else those whose name contains it.
    #[arg(long)]
    pub filter: Option<String>,
    /// Also write the summary as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Runs one parsed invocation, writing documents to `out` and diagnostics
/// to `err`. Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match &cli.command {
        Command::Design(a) => commands::design(a, out),
        Command::Gain(a) => commands::gain(a, out),
        Command::Simulate(a) => commands::simulate(a, out, err),
        Command::Check(a) => commands::check(a, out),
        Command::Bench(a) => corpus::bench(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}
