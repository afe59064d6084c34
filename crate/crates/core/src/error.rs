use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("no samples")]
    NoSamples,

    #[error("offset estimator requires paired samples")]
    NoPairedSamples,

    #[error("hybrid requires n_b >= n_a (got n_a = {n_a}, n_b = {n_b})")]
    HybridOrder { n_a: u64, n_b: u64 },

    #[error("value {value} at position {index} is not binary")]
    NonBinary { index: usize, value: f64 },

    #[error("n_b too small for target precision (n_b = {n_b})")]
    AuxiliaryTooSmall { n_b: f64 },

    #[error("threshold undefined: sigma_b ({sigma_b}) must be below sigma_p ({sigma_p})")]
    ThresholdUndefined { sigma_p: f64, sigma_b: f64 },

    #[error("infeasible budget {budget}: {reason}")]
    InfeasibleBudget { budget: f64, reason: String },

    #[error("confusion matrix not invertible (alpha + beta - 1 = {denominator})")]
    NotInvertible { denominator: f64 },

    #[error("cannot estimate {which}: no paired records with primary label {label}")]
    CannotEstimate { which: &'static str, label: u8 },

    #[error("operation assumes a binary value space; acknowledge it with ValueSpace::Binary")]
    RequiresBinarySpace,

    #[error("{0} is required for this operation")]
    Missing(&'static str),

    #[error("design {0} is not supported here")]
    UnsupportedDesign(String),

    #[error("{path}: row {row}: {reason}")]
    Ingest {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Whether the error means the requested design or budget cannot be met,
    /// as opposed to malformed input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleBudget { .. }
                | Error::AuxiliaryTooSmall { .. }
                | Error::ThresholdUndefined { .. }
                | Error::NotInvertible { .. }
        )
    }
}
