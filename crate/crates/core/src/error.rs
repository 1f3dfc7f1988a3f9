use thiserror::Error;

/// Errors shared by the numeric and data-handling modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 2 entries, got {0}")]
    DimTooSmall(usize),

    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },

    #[error("entry {index} is not finite")]
    NonFiniteEntry { index: usize },

    #[error("entries sum to {0}, expected positive mass")]
    ZeroMass(f64),

    #[error("entries sum to {sum}, expected 1 within {tolerance}")]
    MassNotUnit { sum: f64, tolerance: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("gamma must lie in [0, 1], got {0}")]
    GammaOutOfRange(f64),

    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("delta must lie in [0, 1], got {0}")]
    DeltaOutOfRange(f64),

    #[error("truncation fraction must lie in [0, 1), got {0}")]
    TruncFracOutOfRange(f64),

    #[error("mixture needs at least 2 components, got {0}")]
    BadComponentCount(usize),

    #[error("need at least {needed} samples for {components} components, got {got}")]
    TooFewSamples {
        needed: usize,
        components: usize,
        got: usize,
    },

    #[error("loss kind `{0}` has no analytic gradient path")]
    UnsupportedLossKind(String),

    #[error("concentration must be positive and finite, got {0}")]
    NonPositiveConcentration(f64),

    #[error("noise rate must lie in [0, 1], got {0}")]
    NoiseRateOutOfRange(f64),

    #[error("fixed-distribution noise requires noise_conditionals")]
    MissingNoiseRows,

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("learning rate must be positive, got {0}")]
    NonPositiveLearningRate(f64),

    #[error("context {0} has no examples")]
    EmptyContext(usize),

    #[error("weight AUC needs both clean and noisy samples")]
    OneClassOnly,

    #[error("sample size {size} exceeds corpus document count {count}")]
    SizeExceedsCorpus { size: usize, count: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
