//! Command-line front end for the abc-engine inference library.
//!
//! Exit codes: 0 on success, 2 for configuration/schema problems, 3 for
//! runtime inference failures.

mod bench;
mod config;
mod infer;
mod lorenz_demo;
mod schedule_sim;

use std::fmt;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Schema violations, unreadable inputs, inconsistent settings.
    Config(String),
    /// Failures while an inference or benchmark is running.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "abc-engine",
    version,
    about = "Likelihood-free inference with an instrumented parallel executor",
    after_help = "Worker counts fall back to the ABC_ENGINE_WORKERS environment variable \
                  where --workers is omitted."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an inference experiment from a JSON config and write its journal
    Infer(InferArgs),
    /// Repeat a run across worker counts and report speedup/efficiency
    Bench(bench::BenchArgs),
    /// Simulate static vs dynamic-greedy scheduling over task durations
    ScheduleSim(schedule_sim::ScheduleSimArgs),
    /// Generate the Lorenz observed dataset; optionally infer from it
    LorenzDemo(lorenz_demo::LorenzDemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Static,
    Dynamic,
}

impl ModeArg {
    pub fn to_spec(self, workers: usize) -> abc_engine::ExecutorSpec {
        match self {
            ModeArg::Sequential => abc_engine::ExecutorSpec::Sequential,
            ModeArg::Static => abc_engine::ExecutorSpec::StaticChunked(workers),
            ModeArg::Dynamic => abc_engine::ExecutorSpec::DynamicGreedy(workers),
        }
    }
}

#[derive(Args)]
pub struct InferArgs {
    /// JSON experiment config
    #[arg(long)]
    config: std::path::PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker lane count override
    #[arg(long, env = "ABC_ENGINE_WORKERS")]
    workers: Option<usize>,
    /// Executor mode override
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Journal output path
    #[arg(long, default_value = "journal.json")]
    out: std::path::PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer(args) => infer::run(args),
        Command::Bench(args) => bench::run(args),
        Command::ScheduleSim(args) => schedule_sim::run(args),
        Command::LorenzDemo(args) => lorenz_demo::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
