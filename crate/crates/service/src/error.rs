use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub nearest: Vec<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    nearest: &'a [String],
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            nearest: Vec::new(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<annoloop::Error> for ApiError {
    fn from(e: annoloop::Error) -> Self {
        use annoloop::Error as E;
        let message = e.to_string();
        match e {
            E::SeedNotFound { nearest, .. } => ApiError {
                nearest,
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_phrase", message)
            },
            E::NoModel | E::PoolExhausted => ApiError::conflict(message),
            E::Rejected(_) | E::InvalidLabels(_) | E::Empty(_) => ApiError::invalid(message),
            E::Config(_) | E::Parse { .. } | E::UnknownLabel { .. } | E::DegenerateIdf { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
            }
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.code,
            message: &self.message,
            nearest: &self.nearest,
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
