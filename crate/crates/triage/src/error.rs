use std::path::{Path, PathBuf};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use callsight::NodeId;

use crate::wire::ErrorBody;

pub type TriageResult<T> = std::result::Result<T, TriageError>;

#[derive(Debug, thiserror::Error)]
pub enum TriageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("decision log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("node {0} is not a call site")]
    UnknownCallsite(NodeId),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] callsight::Error),
}

impl TriageError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        TriageError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn status(&self) -> (StatusCode, &'static str) {
        match self {
            TriageError::UnknownCallsite(_) => (StatusCode::NOT_FOUND, "not_found"),
            TriageError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for TriageError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        let body = ErrorBody {
            code: code.to_string(),
            error: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}
