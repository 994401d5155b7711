use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use signalgame_protocol::ApiError;

use crate::session::SessionError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("event log: {0}")]
    Log(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    fn parts(&self) -> (StatusCode, &'static str) {
        match self {
            ServiceError::Session(e) => match e {
                SessionError::DuplicateCode(_) => (StatusCode::CONFLICT, "duplicate_code"),
                SessionError::EmptyCode => (StatusCode::BAD_REQUEST, "empty_code"),
                SessionError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
                SessionError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
                SessionError::StaleIndex { .. } => (StatusCode::CONFLICT, "stale_index"),
                SessionError::InvalidAction(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_action"),
                SessionError::InvalidSurvey(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_survey"),
                SessionError::CorruptLog(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
            },
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Log(_) => (StatusCode::INTERNAL_SERVER_ERROR, "event_log"),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, error) = self.parts();
        if status.is_server_error() {
            tracing::error!(%self, "request failed");
        }
        (status, Json(ApiError { error: error.to_string(), message: self.to_string() })).into_response()
    }
}
