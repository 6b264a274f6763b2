//! `sciphrase`: keyphrase classification pipeline.
//!
//! Subcommands: `ingest`, `train`, `predict`, `vote`, `score`, `report`.
//! Exit codes: 0 on success, 1 on data errors (unparseable corpora, missing
//! predictions), 2 on configuration errors (clap usage errors included).

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sciphrase", version, about = "Classify scientific keyphrases into Material / Process / Task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a standoff split directory and dump its instances as JSON-lines
    Ingest(commands::ingest::IngestArgs),
    /// Train a hyperparameter-sampled model population
    Train(commands::train::TrainArgs),
    /// Write per-model prediction files for a data split
    Predict(commands::predict::PredictArgs),
    /// Combine per-model predictions by simple majority vote
    Vote(commands::vote::VoteArgs),
    /// Score a prediction file against a gold instance dump
    Score(commands::score::ScoreArgs),
    /// Per-instance vote histograms and winning margins
    Report(commands::report::ReportArgs),
}

/// Error category decides the exit code.
pub enum CliError {
    /// Broken inputs: exit 1.
    Data(anyhow::Error),
    /// Broken invocation or configuration: exit 2.
    Config(anyhow::Error),
}

pub type CliResult = Result<(), CliError>;

pub fn data_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

pub fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Vote(args) => commands::vote::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}
