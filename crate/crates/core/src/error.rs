use std::path::PathBuf;

/// Errors produced anywhere in the training / meta-learning stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    #[error("alpha-divergence parameter must not be 0 or 1 (got {0})")]
    InvalidAlpha(f64),

    #[error("neuron {unit} has zero input weight but non-zero output weight")]
    DegenerateWeight { unit: usize },

    #[error("invalid policy shape: {0}")]
    InvalidPolicy(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sigma must be positive (got {0})")]
    NonPositiveSigma(f64),

    #[error("non-finite gradient at step {step} with potential {potential}")]
    NonFiniteGradient { step: usize, potential: String },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
