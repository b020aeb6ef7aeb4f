//! Pipeline driver: configuration, artifact layout and subcommands.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing prerequisite artifact {}", .0.display())]
    Missing(PathBuf),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<funnel_core::Error> for CliError {
    fn from(e: funnel_core::Error) -> Self {
        use funnel_core::Error;
        match e {
            Error::MissingArtifact(p) => CliError::Missing(p),
            Error::TrainingDiverged(_) | Error::SimDiverged { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}
