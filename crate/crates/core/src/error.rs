//! Error type shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a cross-field consistency rule.
    /// `field` is the dotted path of the offending entry.
    #[error("config `{field}`: {message}")]
    Config { field: String, message: String },

    /// Configuration file could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// A numerical precondition was violated at call time.
    #[error("{0}")]
    Invalid(String),

    /// Eigensolver failure, annotated with the element it occurred on
    /// when raised from a per-element local solve.
    #[error("eigensolver failed{}: {message}", element.map(|k| format!(" on element {k}")).unwrap_or_default())]
    Eigensolver {
        element: Option<usize>,
        message: String,
    },

    /// A per-element task failed or panicked inside the parallel runtime.
    #[error("element {element}: {message}")]
    ElementTask { element: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("result serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
