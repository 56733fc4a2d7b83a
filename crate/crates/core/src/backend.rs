//! Errors shared by every model-backend contract (encoders, scorer, generator).

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Connection-level failure; worth retrying.
    #[error("{endpoint}: transport error: {message}")]
    Transport { endpoint: String, message: String },
    /// The backend answered with a non-success status.
    #[error("{endpoint}: HTTP {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    /// The backend answered with something that does not fit the protocol.
    #[error("{endpoint}: protocol error: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("invalid backend input: {0}")]
    InvalidInput(String),
    #[error("generator context too long: {tokens} tokens exceeds {limit}")]
    ContextTooLong { tokens: usize, limit: usize },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
