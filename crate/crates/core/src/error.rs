//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing variant for source id {0}")]
    MissingVariant(u64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("numerical abort at step {step} (lr {lr:.6e}): loss {loss}; recent losses {trace:?}")]
    NumericalAbort {
        step: usize,
        lr: f64,
        loss: f64,
        trace: Vec<f64>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line front-end.
    ///
    /// 2 = configuration problem, 3 = I/O, 4 = numerical abort, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Contract(_)
            | Error::Shape(_)
            | Error::MissingVariant(_)
            | Error::InsufficientData(_)
            | Error::Json(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Image { .. } | Error::Csv(_) => 3,
            Error::NumericalAbort { .. } | Error::NonFinite(_) | Error::Degenerate(_) => 4,
        }
    }
}
