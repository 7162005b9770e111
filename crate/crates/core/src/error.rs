use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("trajectory became non-finite at step {step} (seed {seed})")]
    NonFiniteTrajectory { seed: u64, step: u64 },

    #[error("series is degenerate: {0}")]
    DegenerateSeries(&'static str),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("no trades in input")]
    EmptyInput,

    #[error("calibration segment has zero variance in dimension {0}")]
    DegenerateCalibration(char),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("need at least {needed} calibration predictions, got {got}")]
    InsufficientCalibration { needed: usize, got: usize },

    #[error("scaling fit needs at least two distinct horizons")]
    DegenerateFit,

    #[error("no checkpoint for horizon {0}")]
    MissingCheckpoint(u32),

    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonFiniteTrajectory { .. } | Error::NonFiniteActivation(_) => ErrorClass::Numeric,
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
    Io,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
