//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("thresholds not strictly increasing at index {index}: {prev} >= {next}")]
    ThresholdsNotIncreasing { index: usize, prev: f64, next: f64 },

    #[error("threshold at index {index} is not finite")]
    ThresholdNotFinite { index: usize },

    #[error("feature {feature}: learned thresholds contain a non-finite value")]
    NonFiniteLearnedThreshold { feature: usize },

    #[error("bit width {bits} out of supported range [{min}, {max}]")]
    BitWidthOutOfRange { bits: u8, min: u8, max: u8 },

    #[error("expected {expected} thresholds for bit width {bits}, got {got}")]
    ThresholdCountMismatch { bits: u8, expected: usize, got: usize },

    #[error("code {code} exceeds maximum {max}")]
    CodeOutOfRange { code: u16, max: u16 },

    #[error("code {code} at position {index} does not fit in {bits} bits")]
    CodeTooWide { index: usize, code: u16, bits: u8 },

    #[error("bit vector is not of staircase form at index {index}")]
    NotStaircase { index: usize },

    #[error("constant feature{}: cannot fit thresholds", name_suffix(.name))]
    ConstantFeature { name: Option<String> },

    #[error("empty data: cannot fit thresholds")]
    EmptyData,

    #[error("data contains a non-finite value at index {index}")]
    NonFiniteData { index: usize },

    #[error("temperature must be positive, got {tau}")]
    InvalidTemperature { tau: f64 },

    #[error("invalid temperature schedule: tau_init={tau_init}, tau_end={tau_end}")]
    InvalidSchedule { tau_init: f64, tau_end: f64 },

    #[error("epoch {epoch} out of range [0, {total}]")]
    EpochOutOfRange { epoch: u32, total: u32 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u32, batch: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("csv parse error at row {row}, column {column}: {message}")]
    CsvCell { row: usize, column: String, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("target column {name:?} not found")]
    MissingTargetColumn { name: String },

    #[error("dataset is empty after ingestion")]
    EmptyDataset,

    #[error("feature {name:?} has zero variance on the fitting rows")]
    ZeroVarianceFeature { name: String },

    #[error("all grid points diverged during cross-validation")]
    AllGridPointsDiverged,

    #[error("nothing to report")]
    NothingToReport,

    #[error("checkpoint has no standardizer; cannot export raw-space encoder")]
    MissingStandardizer,

    #[error("checkpoint has no threshold tables (full-precision model?)")]
    MissingThresholds,

    #[error("encoder table does not match checkpoint: {reason}")]
    TableMismatch { reason: String },

    #[error("bad frame magic")]
    FrameMagic,

    #[error("unsupported frame version {got}")]
    FrameVersion { got: u8 },

    #[error("frame length mismatch: expected {expected} bytes, got {got}")]
    FrameLength { expected: usize, got: usize },

    #[error("frame has nonzero trailing padding bits")]
    FrameTrailingBits,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn name_suffix(name: &Option<String>) -> String {
    match name {
        Some(n) => format!(" {n:?}"),
        None => String::new(),
    }
}
