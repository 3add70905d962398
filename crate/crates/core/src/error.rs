use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("bad binary file: {0}")]
    Format(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in {layer} (row {row}, column {column})")]
    NonFinite {
        layer: String,
        row: usize,
        column: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("{0}")]
    Empty(String),

    #[error("stage `{stage}` failed for building `{building}`: {source}")]
    Stage {
        building: String,
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn stage(building: &str, stage: &str, source: Error) -> Self {
        Error::Stage {
            building: building.to_string(),
            stage: stage.to_string(),
            source: Box::new(source),
        }
    }

    /// True when the error is caused by bad user input rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_user_error(),
            Error::Io(_)
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Format(_)
            | Error::Degenerate(_)
            | Error::Config(_)
            | Error::Metric(_)
            | Error::Empty(_)
            | Error::ShapeMismatch(_) => true,
            Error::NonFinite { .. } => false,
        }
    }
}
