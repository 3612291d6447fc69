//! `sgm`: train, evaluate and inspect structured Gaussian manifold embeddings.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgm::trainer::LossKind;

use crate::config::{FlagOverrides, SummarizeMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Internal(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<sgm::Error> for CliError {
    fn from(err: sgm::Error) -> Self {
        use sgm::Error as E;
        let msg = err.to_string();
        match err.root() {
            E::Contract(_) => CliError::Usage(msg),
            E::Numerical(_) => CliError::Numerical(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgm", version, about = "Structured Gaussian manifold metric learning")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat TOML file of run settings.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed of every random stream in the run.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Labelled CSV dataset (`label,f0,...`).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Encoder checkpoint written by `train`, `subspace` or `compare`.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Override one config key, e.g. `--set updates=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Training preset used as the base config: `paper-meth` or `paper-exp`.
    #[arg(long)]
    pub preset: Option<String>,
    /// `sgm` or `triplet`.
    #[arg(long)]
    pub loss: Option<LossKind>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an encoder with the SGM or triplet loss.
    Train(Common),
    /// Embed a held-out split and report NMI, Recall@K and classification scores.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Labelled reference set; the whole `--dataset` becomes the query set.
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
    /// Learn Gaussian sub-classes by alternating training with per-class EM.
    Subspace(Common),
    /// Cluster embeddings and list each group's medoid and Top-k members.
    Summarize {
        #[command(flatten)]
        common: Common,
        /// Grouping mode; overrides `summarize_mode`.
        #[arg(long, value_enum)]
        mode: Option<SummarizeMode>,
    },
    /// Nearest neighbours of chosen samples, the query itself excluded.
    Retrieve {
        #[command(flatten)]
        common: Common,
        /// Row index of a query sample. Repeatable.
        #[arg(long = "query", value_name = "ID", required = true)]
        queries: Vec<usize>,
        /// Neighbours per query; overrides `retrieve_k`.
        #[arg(long, value_name = "K")]
        k: Option<usize>,
    },
    /// Compare analytic loss gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Write the embedding of every dataset row.
    Embed(Common),
    /// Train both losses on the same split and evaluate them side by side.
    Compare(Common),
    /// Generate a Gaussian blobs dataset with its ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        blobs: commands::synth::BlobArgs,
    },
}

impl Common {
    fn flags(&self) -> FlagOverrides {
        FlagOverrides {
            seed: self.seed,
            preset: self.preset.clone(),
            loss: self.loss,
            summarize_mode: None,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let resolve = |common: &Common, flags: FlagOverrides| {
        config::resolve(common.config.as_deref(), &common.sets, &flags)
    };
    match cli.command {
        Command::Train(common) => commands::train::run(&common, &resolve(&common, common.flags())?),
        Command::Eval { common, reference } => {
            commands::eval::run(&common, reference.as_deref(), &resolve(&common, common.flags())?)
        }
        Command::Subspace(common) => commands::subspace::run(&common, &resolve(&common, common.flags())?),
        Command::Summarize { common, mode } => {
            let flags = FlagOverrides {
                summarize_mode: mode,
                ..common.flags()
            };
            commands::summarize::run(&common, &resolve(&common, flags)?)
        }
        Command::Retrieve { common, queries, k } => {
            commands::retrieve::run(&common, &queries, k, &resolve(&common, common.flags())?)
        }
        Command::Gradcheck { common, corrupt } => {
            commands::gradcheck::run(&common, corrupt, &resolve(&common, common.flags())?)
        }
        Command::Embed(common) => commands::embed::run(&common, &resolve(&common, common.flags())?),
        Command::Compare(common) => commands::compare::run(&common, &resolve(&common, common.flags())?),
        Command::Synth { common, blobs } => commands::synth::run(&common, &blobs, &resolve(&common, common.flags())?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
