use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] radio_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("event log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
}

/// JSON error body `{"error": code, "message": ...}` with a status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }
}

impl From<radio_core::Error> for ApiError {
    fn from(e: radio_core::Error) -> Self {
        use radio_core::Error as E;
        let (status, code) = match &e {
            E::Validation(_) | E::CatalogLoad { .. } | E::DegenerateDesign(_) | E::UnknownStrategy { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation")
            }
            E::UnknownId { .. } => (StatusCode::NOT_FOUND, "not_found"),
            E::QueueFull { .. } => (StatusCode::SERVICE_UNAVAILABLE, "queue_full"),
            E::PoolExhausted => (StatusCode::CONFLICT, "catalog_empty"),
            E::IllegalTransition { .. } | E::Generator(_) | E::Replay { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(c) => c.into(),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}
