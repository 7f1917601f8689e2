use thiserror::Error;

use crate::gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the workbench core.
///
/// Every variant maps onto one machine-stable code via [`Error::code`], which
/// is what the HTTP layer and the CLI report to callers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("conversation was generated against diagram version {conversation} but the diagram is now at version {current}; regenerate from the beginning")]
    StaleConversation { conversation: u64, current: u64 },

    #[error("session is busy with another operation")]
    SessionBusy,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("knowledge state length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("k = {k} is out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },

    #[error("message {0} is not a student message")]
    IndexNotStudentMessage(usize),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("no evaluation records")]
    EmptyRecords,

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable error code shared with the HTTP API and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::StaleConversation { .. } => "stale_conversation",
            Error::SessionBusy => "session_busy",
            Error::NotFound(_) => "not_found",
            Error::Schema(_) => "schema_error",
            Error::Gateway(_) => "provider_error",
            Error::Io(_) => "io_error",
            Error::Validation(_)
            | Error::LengthMismatch { .. }
            | Error::KOutOfRange { .. }
            | Error::IndexNotStudentMessage(_)
            | Error::OutOfRange(_)
            | Error::EmptyRecords => "validation_failed",
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
