use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix of dimension {dim} is not positive definite even with jitter {max_jitter:e}")]
    NonSpd { dim: usize, max_jitter: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trace does not match weights: {0}")]
    TraceStale(String),

    #[error("training diverged at epoch {epoch}: objective is not finite")]
    Divergence { epoch: usize },

    #[error("model has not been trained")]
    NotTrained,

    #[error("targets have zero variance")]
    ZeroVariance,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("time is not strictly increasing for design {design} at row {row}")]
    NonMonotoneTime { design: String, row: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("ragged sequences: design {design} has {found} steps, expected {expected}")]
    RaggedSequence {
        design: String,
        expected: usize,
        found: usize,
    },

    #[error("normalizer has not been fitted for {0} channels")]
    UnfittedNormalizer(usize),

    #[error("checkpoint not found: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid value for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("design inputs unavailable: {0}")]
    NotSweepable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, printed by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "E_SHAPE",
            Error::NonSpd { .. } => "E_NON_SPD",
            Error::Domain(_) => "E_DOMAIN",
            Error::TraceStale(_) => "E_TRACE_STALE",
            Error::Divergence { .. } => "E_DIVERGENCE",
            Error::NotTrained => "E_NOT_TRAINED",
            Error::ZeroVariance => "E_ZERO_VARIANCE",
            Error::Parse { .. } => "E_PARSE",
            Error::NonMonotoneTime { .. } => "E_NON_MONOTONE_TIME",
            Error::MissingColumn(_) => "E_MISSING_COLUMN",
            Error::RaggedSequence { .. } => "E_RAGGED_SEQUENCE",
            Error::UnfittedNormalizer(_) => "E_UNFITTED_NORMALIZER",
            Error::MissingCheckpoint(_) => "E_MISSING_CHECKPOINT",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Config { .. } => "E_CONFIG",
            Error::NotSweepable(_) => "E_NOT_SWEEPABLE",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
