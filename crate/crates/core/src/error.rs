use thiserror::Error;

/// Errors raised anywhere in the sampling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (jitter reached {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("invalid radii: c_lo = {c_lo}, c_hi = {c_hi}")]
    InvalidRadii { c_lo: f64, c_hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target density returned NaN")]
    TargetNan,

    #[error("no finite target density found from {attempts} initial draws")]
    TargetUnevaluable { attempts: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("all sample points coincide")]
    DegenerateCloud,

    #[error("modal region {0} has too few members; enlarge its radius")]
    EmptyModalRegion(usize),

    #[error("target density vanishes at every Monte Carlo point of shell {shell}")]
    AllZeroDensity { shell: usize },

    #[error("no shell of mode {mode} carries positive estimated mass")]
    NoMassAnywhere { mode: usize },

    #[error("no model has finite evidence")]
    AllModelsImpossible,

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("shell {shell} of mode {mode} has zero minorization probability")]
    ZeroMinorization { mode: usize, shell: usize },

    #[error("shell count for mode {mode} would exceed the cap of {cap}")]
    ShellCapExceeded { mode: usize, cap: usize },

    #[error("no sampling plan for k = {0}")]
    MissingPlan(usize),

    #[error("{path}:{line}: {message}")]
    Data { path: String, line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::InvalidRadii { .. } => "InvalidRadii",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::TargetNan => "TargetNan",
            Error::TargetUnevaluable { .. } => "TargetUnevaluable",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::DegenerateCloud => "DegenerateCloud",
            Error::EmptyModalRegion(_) => "EmptyModalRegion",
            Error::AllZeroDensity { .. } => "AllZeroDensity",
            Error::NoMassAnywhere { .. } => "NoMassAnywhere",
            Error::AllModelsImpossible => "AllModelsImpossible",
            Error::InvalidProbability(_) => "InvalidProbability",
            Error::ZeroMinorization { .. } => "ZeroMinorization",
            Error::ShellCapExceeded { .. } => "ShellCapExceeded",
            Error::MissingPlan(_) => "MissingPlan",
            Error::Data { .. } => "Data",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
