use serde::{Deserialize, Serialize};
use thiserror::Error;

use ringside_core::Error as CoreError;

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("no open session for match {0}")]
    SessionClosed(String),
    #[error("unknown match {0}")]
    UnknownMatch(String),
    #[error("unknown metrics scope {0}")]
    UnknownScope(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("event {0} is not pending review")]
    NotPending(String),
    #[error("unknown event {0}")]
    UnknownEvent(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Engine(#[from] CoreError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::SessionClosed(_) => "session_closed",
            GatewayError::UnknownMatch(_) => "unknown_match",
            GatewayError::UnknownScope(_) => "unknown_scope",
            GatewayError::ValidationFailed(_) => "validation_failed",
            GatewayError::NotPending(_) => "not_pending",
            GatewayError::UnknownEvent(_) => "unknown_event",
            GatewayError::Unauthorized(_) => "unauthorized",
            GatewayError::BadRequest(_) => "bad_request",
            GatewayError::Engine(CoreError::TamperDetected { .. }) => "tamper_detected",
            GatewayError::Engine(CoreError::UnreviewedFinalization(_)) => "unreviewed_finalization",
            GatewayError::Engine(CoreError::StorageFailure(_)) => "storage_failure",
            GatewayError::Engine(_) => "engine_error",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

/// Error payload on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
