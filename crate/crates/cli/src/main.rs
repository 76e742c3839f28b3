//! `amih`: generate datasets, build and query indexes, run benchmarks.

mod bench;
mod build;
mod data;
mod gen;
mod output;
mod query;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amih", version, about = "Exact angular KNN over binary codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random dataset.
    Gen(gen::GenArgs),
    /// Build an index from a dataset and save a snapshot.
    Build(build::BuildArgs),
    /// Answer KNN queries against a snapshot, one JSON line per query.
    Query(query::QueryArgs),
    /// Time engines over dataset prefixes and write CSV.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Single,
    Amih,
    Scan,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Single => "single",
            Engine::Amih => "amih",
            Engine::Scan => "scan",
        }
    }
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or a refused request: exit 2.
    Usage(String),
    /// Unreadable, corrupt or mismatched data: exit 1.
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Build(a) => build::run(a),
        Command::Query(a) => query::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
