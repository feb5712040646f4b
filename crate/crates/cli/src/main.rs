mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input files.
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

/// Match free-text postal addresses against a structured address corpus.
#[derive(Debug, Parser)]
#[command(name = "addrmatch", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Stop-word list, one term per line.
    #[arg(long, global = true, value_name = "FILE")]
    stoplist: Option<PathBuf>,
    /// Abbreviation table, `variant<TAB>canonical[<TAB>street]` per line.
    #[arg(long, global = true, value_name = "FILE")]
    abbreviations: Option<PathBuf>,
    #[arg(long, global = true)]
    k1: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
    #[arg(long, global = true)]
    k3: Option<f64>,
    /// Score lead over rank 2 above which rank 1 is accepted without re-ranking.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Retrieval depth.
    #[arg(long, global = true)]
    k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an index from a CSV or JSONL corpus.
    Index {
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Match one address and show the ranked candidates.
    Query {
        index: PathBuf,
        corpus: PathBuf,
        text: String,
        /// Show per-term BM25 summands and per-component similarities.
        #[arg(long)]
        explain: bool,
        /// Print a single JSON object instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Match every query in a text or JSONL file, writing JSONL results.
    MatchBatch {
        index: PathBuf,
        corpus: PathBuf,
        queries: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Precision, recall and F1 over labeled pairs, optionally over a BM25 grid.
    Eval {
        index: PathBuf,
        corpus: PathBuf,
        pairs: PathBuf,
        /// Comma-separated k1 values to search.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        grid_k1: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        grid_b: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        grid_k3: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Estimate the gate threshold from rank-1/rank-2 score gaps.
    EstimateThreshold {
        index: PathBuf,
        corpus: PathBuf,
        queries: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("addrmatch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
