use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use teachbench_core::Error;

/// Every code the API can return.
pub const ERROR_CODES: [&str; 8] = [
    "stale_conversation",
    "session_busy",
    "validation_failed",
    "provider_error",
    "not_found",
    "schema_error",
    "io_error",
    "unauthorized",
];

/// JSON error body: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new("not_found", format!("not found: {}", what.into()))
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new("validation_failed", message)
    }

    pub fn status(&self) -> StatusCode {
        status_for(&self.code)
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "stale_conversation" | "session_busy" => StatusCode::CONFLICT,
        "validation_failed" => StatusCode::BAD_REQUEST,
        "provider_error" => StatusCode::BAD_GATEWAY,
        "not_found" => StatusCode::NOT_FOUND,
        "schema_error" => StatusCode::UNPROCESSABLE_ENTITY,
        "unauthorized" => StatusCode::UNAUTHORIZED,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let details = match &e {
            Error::StaleConversation { conversation, current } => {
                serde_json::json!({"conversation_version": conversation, "diagram_version": current})
            }
            Error::Gateway(g) => serde_json::json!({"kind": g.kind()}),
            _ => Value::Null,
        };
        ApiError::new(e.code(), e.to_string()).with_details(details)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(code = %self.code, message = %self.message, "request failed");
        }
        (self.status(), Json(self)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

/// JSON request body whose rejections come back as `schema_error`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(ApiError::new("schema_error", rejection.body_text())),
        }
    }
}
