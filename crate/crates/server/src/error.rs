use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};

use edg_core::api::ErrorBody;
use edg_core::session::{Outcome, SessionError};
use edg_core::Violation;

use crate::idempotency::Cached;

/// A non-2xx reply. The body is always an [`ErrorBody`].
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.to_string(), message: message.into(), violations: Vec::new() } }
    }

    pub fn not_found(session: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no session `{session}`"))
    }

    /// A rejected turn. The body code is the first violation's code so a
    /// single-fault turn reads naturally; the full list travels alongside.
    pub fn rejected(code: String, message: String, violations: Vec<Violation>) -> Self {
        let status = if code == "NOT_YOUR_TURN" { StatusCode::CONFLICT } else { StatusCode::UNPROCESSABLE_ENTITY };
        let code = violations.first().map_or(code, |v| v.code.as_str().to_string());
        Self { status, body: ErrorBody { code, message, violations } }
    }

    pub(crate) fn unexpected(outcome: &Outcome) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", format!("unexpected outcome {outcome:?}"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError::*;
        let status = match &e {
            InvalidConfig(_) | InvalidName(_) | UnknownParticipant(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SecondInitiator
            | SessionStarted
            | DuplicateName(_)
            | NoInitiator
            | NotEnoughParticipants { .. }
            | NotStarted
            | Closed => StatusCode::CONFLICT,
            UnknownLocution(_) => StatusCode::NOT_FOUND,
            CorruptLog { .. } | Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "storage fault");
        }
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        Cached::from(self).into_response()
    }
}
