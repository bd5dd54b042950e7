use std::path::PathBuf;

use mfg_core::fixed_point::SolveReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed archive: {0}")]
    Archive(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] mfg_core::Error),

    #[error("solver did not converge after {} iterations (last update {:.3e})", .0.iterations, .0.last_update())]
    NotConverged(Box<SolveReport>),

    #[error("verification failed: {}", .0.join("; "))]
    VerificationFailed(Vec<String>),
}

impl CliError {
    /// 0 success, 1 bad input, 2 non-convergence, 3 failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotConverged(_) | CliError::Core(mfg_core::Error::NotConverged { .. }) => 2,
            CliError::VerificationFailed(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
