use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("resource {resource} has a zero time constant; use the ideal-resource mode instead")]
    ZeroTimeConstant { resource: usize },

    #[error("integration blew up in slot {slot} (t = {time} s): non-finite state")]
    IntegrationBlowup { slot: usize, time: f64 },

    #[error("cost bound undefined: contraction factor {gamma} >= 1 (spectral condition violated)")]
    BoundUndefined { gamma: f64 },

    #[error("{}", fmt_config(.line, .message))]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("malformed trace at row {row}: {message}")]
    Trace { row: usize, message: String },

    #[error("scenarios are not comparable: {0}")]
    Incomparable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("config line {line}: {message}"),
        None => format!("config: {message}"),
    }
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
