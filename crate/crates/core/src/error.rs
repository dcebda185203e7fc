use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants fall into two families that the command line maps onto
/// distinct exit codes: input/validation problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid timestamps at index {index}: {reason}")]
    Timestamps { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input rejected ({} problem(s)):\n{}", .0.len(), .0.join("\n"))]
    Ingest(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: expected {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("observation at index {index} has zero probability under every state")]
    ZeroLikelihood { index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line: 1 for validation, 2 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ZeroLikelihood { .. } | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
