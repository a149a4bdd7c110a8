use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    Singular,

    #[error("parameter layout error: expected {expected} values, got {got}")]
    Layout { expected: usize, got: usize },

    #[error("transform saturated in block `{block}`")]
    Saturation { block: String },

    #[error("non-finite log density in block `{block}`")]
    Evaluation { block: String },

    #[error("degenerate column `{column}`: {reason}")]
    DegenerateColumn { column: String, reason: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("configuration error: {0}")]
    Configuration(String),
}
