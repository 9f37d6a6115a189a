//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    // ---- log parsing / loading ----
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong type: expected {expected}")]
    TypeMismatch { field: String, expected: String },
    #[error("invalid datehour `{0}`: expected YYYYMMDDHH naming a valid calendar hour")]
    InvalidDatehour(String),
    #[error("empty dataset: no usable records")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),

    // ---- labeling / folding ----
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    // ---- featurization ----
    #[error("empty vocabulary: no token met the document-frequency threshold")]
    EmptyVocabulary,
    #[error("idf weights not fitted; call fit_idf before TF-IDF vectorization")]
    MissingIdf,

    // ---- model training / prediction ----
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    // ---- evaluation ----
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    // ---- model repository ----
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    // ---- serving ----
    #[error("startup error: {0}")]
    StartupError(String),
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),

    // ---- drift monitoring ----
    #[error("empty monitor window")]
    EmptyWindow,

    // ---- synthetic workload ----
    #[error("no template for class pair (cpu={cpu}, mem={mem})")]
    NoTemplateForClassPair { cpu: usize, mem: usize },

    // ---- routing simulation ----
    #[error("no cluster available")]
    NoCluster,

    // ---- config / serialization ----
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from the input data rather than the
    /// environment. The CLI maps data errors to exit code 2 and the
    /// rest to 3.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingField(_)
                | Error::TypeMismatch { .. }
                | Error::InvalidDatehour(_)
                | Error::EmptyDataset
                | Error::InsufficientData(_)
                | Error::EmptyVocabulary
                | Error::MissingIdf
                | Error::DegenerateData(_)
                | Error::DimensionMismatch { .. }
                | Error::ZeroVariance
                | Error::InsufficientPoints { .. }
                | Error::NotFound(_)
                | Error::CorruptBundle(_)
                | Error::EmptyWindow
                | Error::NoTemplateForClassPair { .. }
                | Error::Config(_)
        )
    }
}
