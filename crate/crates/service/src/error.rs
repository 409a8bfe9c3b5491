use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rubricate_core::annotator::RunError;
use rubricate_core::workspace::WorkspaceError;
use serde_json::json;

/// An error response with a JSON `{"error": ...}` body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, message = %self.message);
        }
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        let status = match &e {
            WorkspaceError::HumansRequired { .. } | WorkspaceError::NoRun(_) => StatusCode::CONFLICT,
            WorkspaceError::UnknownCategory(_) | WorkspaceError::Human(_) => StatusCode::BAD_REQUEST,
            WorkspaceError::Run(RunError::UnknownRun(_)) | WorkspaceError::Run(RunError::InvalidRunId(_)) => {
                StatusCode::NOT_FOUND
            }
            WorkspaceError::Run(RunError::DigestMismatch { .. }) => StatusCode::CONFLICT,
            WorkspaceError::Metrics(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}
