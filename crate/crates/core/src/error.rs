use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the identification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid range: low {low} must be strictly below high {high}")]
    InvalidRange { low: f64, high: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("channel `{0}` is constant and cannot be normalized")]
    DegenerateChannel(String),

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("metric denominator is zero: {0}")]
    DegenerateDenominator(String),

    #[error("measured signal has zero variance")]
    DegenerateVariance,

    #[error("measured signal is exactly zero at indices {indices:?}")]
    ZeroMeasured { indices: Vec<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("turbine speed {speed_rpm} rpm is below the model floor {floor_rpm} rpm")]
    SpeedFloor { speed_rpm: f64, floor_rpm: f64 },

    #[error("plant state left its valid region at t = {time_s} s: {reason}")]
    PlantFailure { time_s: f64, reason: String },

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
