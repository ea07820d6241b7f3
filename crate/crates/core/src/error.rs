//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a parameter outside its domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Array shapes or sample counts do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation that needs data received none (or fewer points than required).
    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    /// A state entry became NaN or infinite during integration.
    #[error("non-finite state at step {step}: {context}")]
    NonFinite { step: u64, context: String },

    /// A Markov-chain sampler failed to make progress.
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// Malformed CSV input.
    #[error("csv parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
