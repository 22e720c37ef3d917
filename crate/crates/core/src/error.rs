use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mean intensity must be positive, got {0}")]
    NonpositiveMeanIntensity(f64),

    #[error("moment inequality violated at order {order}: {lhs} < {rhs}")]
    MomentInequalityViolated { order: u32, lhs: f64, rhs: f64 },

    #[error("moment g({0}) is not available for this model")]
    MissingMoment(u32),

    #[error("custom source models carry moments only and cannot be sampled")]
    CustomModelNotSamplable,

    #[error("coherence width must be positive, got {0}")]
    NonpositiveWidth(f64),

    #[error("unsupported correlation order {0}")]
    UnsupportedOrder(usize),

    #[error("expansion order {0} exceeds the enumeration budget (max 8)")]
    OrderTooLarge(usize),

    #[error("phase configuration has {got} phases, expected {expected}")]
    PhaseCount { expected: usize, got: usize },

    #[error("scan scheme {scheme} does not support order {order}")]
    SchemeOrder { scheme: &'static str, order: usize },

    #[error("invalid scan parameters: {0}")]
    BadScan(String),

    #[error("pattern has no values")]
    EmptyPattern,

    #[error("pattern values are all zero")]
    AllZeroPattern,

    #[error("pattern value {0} is negative or not finite")]
    InvalidPatternValue(f64),

    #[error("bad batching: {n_samples} samples into {n_batches} batches (need >= 10 batches dividing the sample count)")]
    BadBatching { n_samples: usize, n_batches: usize },

    #[error("bad optics: {0}")]
    BadOptics(String),

    #[error("{path}: malformed file at {location}: {message}")]
    MalformedFile {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("inconsistent frame dimensions: expected {expected:?}, got {got:?}")]
    InconsistentDimensions {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("ROI {roi:?} exceeds frame of {width}x{height}")]
    RoiOutOfBounds {
        roi: (usize, usize, usize, usize),
        width: usize,
        height: usize,
    },

    #[error("reference column {reference} is out of range for ROI width {width}")]
    ReferenceOutOfRange { reference: usize, width: usize },

    #[error("mean profile vanishes at pixel offset {0}")]
    DivisionByZeroMean(i64),

    #[error("frame value {0} cannot be stored losslessly in a 16-bit PGM")]
    NotPgmRepresentable(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
