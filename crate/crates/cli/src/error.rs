//! CLI error type with process exit codes.

use thiserror::Error;

/// Exit codes: 1 usage, 2 data, 3 numeric/convergence.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    DataAt { path: String, line: usize, message: String },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::DataAt { .. } | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<attr_core::Error> for CliError {
    fn from(err: attr_core::Error) -> Self {
        use attr_core::Error as E;
        match err {
            E::NonFinite { .. } | E::InitializationFailed { .. } => {
                CliError::Numeric(err.to_string())
            }
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
