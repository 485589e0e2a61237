// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error types shared across the engine.

use std::path::PathBuf;

use thiserror::Error;

/// Top-level error for every fallible engine operation.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: line {line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error in item `{item_id}`, field `{field}`: {message}")]
    Validation {
        item_id: String,
        field: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("input error for item `{item_id}`: {message}")]
    Input { item_id: String, message: String },

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TraceError {
    pub(crate) fn validation(
        item_id: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Self::Validation {
            item_id: item_id.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Validation { .. } => "validation",
            Self::Config(_) => "config",
            Self::Numeric(_) => "numeric",
            Self::Input { .. } => "input",
            Self::Fixture(_) => "fixture",
            Self::Evaluation(_) => "evaluation",
            Self::Io { .. } => "io",
            Self::Json(_) => "json",
        }
    }

    /// Item the error refers to, when there is one.
    pub fn item_id(&self) -> Option<&str> {
        match self {
            Self::Validation { item_id, .. } | Self::Input { item_id, .. } => Some(item_id),
            _ => None,
        }
    }

    /// True for errors that signal bad input data rather than a broken invocation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::Parse { .. }
                | Self::Validation { .. }
                | Self::Input { .. }
                | Self::Fixture(_)
                | Self::Numeric(_)
                | Self::Evaluation(_)
                | Self::Json(_)
        )
    }
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;
