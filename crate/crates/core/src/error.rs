use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("decorrelation not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("non-finite function value {value} at {point:?}")]
    Evaluation { point: Vec<f64>, value: f64 },

    #[error("reference gradient has zero norm after metric transform")]
    DegenerateReference,

    #[error("fit error: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
