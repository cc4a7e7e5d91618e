use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsiError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point:?} lies outside the input box")]
    OutOfBox { point: Vec<f64> },

    #[error("covariance matrix is singular at jitter {jitter:e}; duplicated points: {duplicates:?}")]
    Singular {
        jitter: f64,
        duplicates: Vec<(usize, usize)>,
    },

    #[error("evaluator failed: {0}")]
    Evaluation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QsiError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(QsiError::DimensionMismatch { expected, got })
    }
}
