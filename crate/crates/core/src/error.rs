use thiserror::Error;

use crate::ingest::SeriesKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: value {value} is not finite")]
    NonFinite { line: u64, value: String },

    #[error("{kind} series has a gap of {missing} hours between {after} and {before} (at most 3 may be interpolated)")]
    Gap {
        kind: SeriesKind,
        after: String,
        before: String,
        missing: i64,
    },

    #[error("{kind} series is empty")]
    EmptySeries { kind: SeriesKind },

    #[error("{kind} series covers {available} but the window needs {needed}")]
    Coverage {
        kind: SeriesKind,
        needed: String,
        available: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("regime {regime} has no observed transitions in bucket {bucket}; use a smoothing pseudo-count alpha > 0")]
    ZeroCountRow { bucket: String, regime: usize },

    #[error("no transition matrix for bucket {0}")]
    UncoveredBucket(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("LP solver stopped with status {status} after {iterations} iterations (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    Solver {
        status: String,
        iterations: u32,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("relative value iteration did not converge after {sweeps} sweeps (span {span:.3e})")]
    NoConvergence { sweeps: usize, span: f64 },

    #[error("missing baseline controller {0}")]
    MissingBaseline(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
