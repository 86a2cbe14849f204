//! Error types shared across the crate.

use thiserror::Error;

/// Errors returned by model evaluation, transforms, fitting, and attribution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("channel id {id} out of range: model has {n_channels} channels")]
    ChannelOutOfRange { id: usize, n_channels: usize },
    #[error("customer index {index} out of range: {n_customers} random effects available")]
    CustomerOutOfRange { index: usize, n_customers: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value while computing {context}")]
    NonFinite { context: String },
    #[error("sampler initialization failed: log density non-finite after {attempts} attempts")]
    InitializationFailed { attempts: usize },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
