use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error body: `{code, message, detail}`.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no dataset with id {id:?}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<idde::Error> for ApiError {
    fn from(err: idde::Error) -> Self {
        use idde::Error as E;
        let message = err.to_string();
        match err {
            E::NonNumeric { row, column, value } => {
                Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
                    .with_detail(serde_json::json!({ "row": row, "column": column, "value": value }))
            }
            E::NonFinite { row, column } => Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
                .with_detail(serde_json::json!({ "row": row, "column": column })),
            E::Ragged { row, expected, found } => {
                Self::new(StatusCode::BAD_REQUEST, "parse_error", message).with_detail(
                    serde_json::json!({ "row": row, "expected": expected, "found": found }),
                )
            }
            E::MissingColumn { row, column, found } => {
                Self::new(StatusCode::BAD_REQUEST, "parse_error", message).with_detail(
                    serde_json::json!({ "row": row, "column": column, "found": found }),
                )
            }
            E::Csv { row, .. } => Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
                .with_detail(serde_json::json!({ "row": row })),
            E::TooFewRows(_) | E::SeriesTooShort { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
            }
            E::OverBudget { pairs, budget } => {
                Self::new(StatusCode::PAYLOAD_TOO_LARGE, "over_budget", message)
                    .with_detail(serde_json::json!({ "pairs": pairs, "budget": budget }))
            }
            E::Degenerate => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate", message),
            E::EmptyRange { lo, hi } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_range", message)
                .with_detail(serde_json::json!({ "lo": lo, "hi": hi })),
            E::InsufficientPoints { lo, hi, found, needed } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_points", message).with_detail(
                    serde_json::json!({ "lo": lo, "hi": hi, "found": found, "needed": needed }),
                )
            }
            E::BeyondCeiling { .. } | E::BelowFloor { .. } | E::NonMonotone { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "out_of_model", message)
            }
            E::InvalidParameter(_) => Self::bad_request(message),
            E::Io(_) | E::Json(_) => Self::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
