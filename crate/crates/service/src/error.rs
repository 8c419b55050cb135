use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use polsynth_core::pipeline::Stage;
use polsynth_core::scenario::ScenarioError;

/// Error body shared by every endpoint: `{stage, message, path}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    /// Pipeline stage, or `session` / `request` for transport-level errors.
    pub stage: String,
    pub message: String,
    pub path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, stage: impl ToString, message: impl ToString) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                stage: stage.to_string(),
                message: message.to_string(),
                path: None,
            },
        }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.body.path = Some(path.into());
        self
    }

    pub fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "session", format!("no session `{id}`"))
    }

    pub fn invalid(stage: Stage, message: impl ToString) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, stage, message)
    }

    pub fn conflict(stage: Stage, message: impl ToString) -> Self {
        ApiError::new(StatusCode::CONFLICT, stage, message)
    }

    pub fn scenario(stage: Stage, e: ScenarioError) -> Self {
        ApiError::invalid(stage, &e.message).at(e.path)
    }

    /// A malformed request body, located by its JSON path.
    pub fn body<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Self {
        let path = e.path().to_string();
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "request", e.into_inner()).at(path)
    }

    pub fn internal(message: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
