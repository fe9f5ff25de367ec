use std::path::Path;

use thiserror::Error;

/// Failures of a command, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input, dimension mismatches.
    #[error("{0}")]
    Input(String),
    /// The solver hit its iteration limit.
    #[error("{0}")]
    NotConverged(String),
    /// σ estimation ran out of degrees of freedom.
    #[error("{0}")]
    DofExhausted(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Output(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::DofExhausted(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn at(path: &Path, line: u64, msg: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}:{line}: {msg}", path.display()))
    }
}

impl From<gslope::Error> for CliError {
    fn from(e: gslope::Error) -> Self {
        match e {
            gslope::Error::DofExhausted { .. } => CliError::DofExhausted(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
