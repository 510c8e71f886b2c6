//! `edda`: augment datasets, inspect embedding neighbors, measure semantic
//! deviation and run learning-curve experiments.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config values, invalid parameter combinations.
    Usage(String),
    /// Missing or malformed input files, failed writes.
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<edda_core::Error> for CliError {
    fn from(e: edda_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    edda_core::CorpusError,
    edda_core::EmbeddingError,
    edda_core::TaggerError,
    edda_core::deviation::PrecomputedError,
    std::io::Error
);

#[derive(Debug, Parser)]
#[command(name = "edda", version, about = "Distributional text augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// EDA-style augmentation with embedding neighbors as synonyms.
    Augment(commands::AugmentArgs),
    /// Replace one word of a given part of speech with a similar word.
    Tssr(commands::TssrArgs),
    /// Print the nearest neighbors of a word.
    Neighbors(commands::NeighborsArgs),
    /// Count augmented sentences that drift from their source.
    Deviation(commands::DeviationArgs),
    /// Print nested stratified training subsets.
    Partition(commands::PartitionArgs),
    /// Train and score a classifier per training fraction and technique.
    Experiment(commands::ExperimentArgs),
    /// Generate a small synthetic corpus with matching resources.
    Synth(commands::SynthArgs),
}

/// `--config` is accepted by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArg {
    /// Flat key=value file; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Augment(a) => commands::augment(a),
        Command::Tssr(a) => commands::tssr(a),
        Command::Neighbors(a) => commands::neighbors(a),
        Command::Deviation(a) => commands::deviation(a),
        Command::Partition(a) => commands::partition(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edda: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("Run `edda --help` for the synopsis.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
