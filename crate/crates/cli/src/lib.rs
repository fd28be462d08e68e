//! Batch front end for `phenolag`: reads a scenario configuration, runs one of
//! the `simulate`, `classify`, `ensemble` or `sweep` commands, and writes
//! trajectories, reports and summary tables tagged with the scenario hash.
//!
//! Exit codes are a stable contract: 0 success, 1 configuration or I/O
//! error, 2 undetermined verdict, 3 partial failure.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run, Command, Invocation};
pub use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot summarise: {0}")]
    Summary(#[from] phenolag::analysis::AnalysisError),
    #[error("cannot evaluate the compensator: {0}")]
    Compensator(#[from] phenolag::measures::MeasureError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Summary(_) | CliError::Compensator(_) => 3,
        }
    }
}

/// How a command that ran to completion went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A boundary case that the condition checkers could not decide.
    Undetermined,
    /// Some seeds failed; the others were still written and summarised.
    PartialFailure,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Undetermined => 2,
            Outcome::PartialFailure => 3,
        }
    }
}
