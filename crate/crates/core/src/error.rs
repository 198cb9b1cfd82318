use thiserror::Error;

use crate::delay::HistoryError;
use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    History(#[from] HistoryError),

    #[error("invalid delay: {0}")]
    InvalidDelay(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("non-finite noise sample {value} at t={t}")]
    NonFiniteNoise { t: f64, value: f64 },

    #[error("design error: {0}")]
    Design(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unstable ensemble: {} path(s) exploded (first at path {}, t={})",
        .explosions.len(),
        .explosions.first().map(|e| e.0).unwrap_or(0),
        .explosions.first().map(|e| e.1).unwrap_or(f64::NAN))]
    UnstableEnsemble { explosions: Vec<(usize, f64)> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
