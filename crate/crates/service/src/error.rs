use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use edgehome_core::backend::BackendError;
use serde_json::json;
use thiserror::Error;

/// Errors returned to HTTP clients as `{"error": {"class", "message"}}`.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no session with id `{0}`")]
    UnknownSession(String),
    #[error("{0}")]
    InvalidHomeConfig(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no such route")]
    NoRoute,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn class(&self) -> &'static str {
        match self {
            ApiError::UnknownSession(_) => "UnknownSession",
            ApiError::InvalidHomeConfig(_) => "InvalidHomeConfig",
            ApiError::InvalidRequest(_) => "InvalidRequest",
            ApiError::Backend(e) => e.class_name(),
            ApiError::NoRoute => "NotFound",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownSession(_) | ApiError::NoRoute => StatusCode::NOT_FOUND,
            ApiError::InvalidHomeConfig(_) | ApiError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Backend(BackendError::BackendUnavailable(_)) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Backend(BackendError::Timeout(_)) => StatusCode::GATEWAY_TIMEOUT,
            ApiError::Backend(BackendError::ContextOverflow { .. }) => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Backend(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"class": self.class(), "message": self.to_string()}});
        (self.status(), Json(body)).into_response()
    }
}
