//! Error type shared across the audit pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("protected column `{column}` must have exactly two observed levels, found {observed:?}")]
    ProtectedNotBinary {
        column: String,
        observed: Vec<String>,
    },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("dataset contains missing values; apply drop_missing first")]
    MissingValuesPresent,

    #[error("singular design matrix (rank-deficient columns: {columns:?})")]
    SingularDesign { columns: Vec<usize> },

    #[error("separation detected: logistic coefficients diverged during IRLS")]
    SeparationDetected,

    #[error("covariance failure: nonpositive variance for coefficient {index}")]
    NumericalCovarianceFailure { index: usize },

    #[error("positivity violation: {0}")]
    PositivityViolation(String),

    #[error("no common support: treated and control score ranges do not overlap")]
    NoCommonSupport,

    #[error("no controls available for matching")]
    NoControlsAvailable,

    #[error("empty match: no matched pairs or subclasses")]
    EmptyMatch,

    #[error("no informative pairs for sensitivity analysis")]
    NoInformativePairs,

    #[error("zero variance feature: {0}")]
    ZeroVarianceFeature(String),

    #[error("internal flow solver error: {0}")]
    InternalFlowError(String),

    #[error("fingerprint mismatch: reports were produced from different datasets ({left} vs {right})")]
    FingerprintMismatch { left: String, right: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
