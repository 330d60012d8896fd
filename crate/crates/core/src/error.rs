use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("compactifier (A0, b0) required but absent: {0}")]
    MissingCompactifier(&'static str),

    #[error("matrix A0 is not positive definite: lambda_min = {lambda_min:.6e}")]
    CompactifierNotPd { lambda_min: f64 },

    #[error("cost matrix is not positive definite (lambda_min(C) = {lambda_min:.6e}); pd-cost mode needs lambda_min(C) > 0")]
    CostNotPd { lambda_min: f64 },

    #[error("sigma_G = {sigma_g:.6e} exceeds the pd-cost cap {cap:.6e} = lambda_min(C) / (6 sqrt(n log(n/delta)))")]
    SigmaGAboveCap { sigma_g: f64, cap: f64 },

    #[error("perturbation required: {0}")]
    PerturbationRequired(&'static str),

    #[error("Lanczos failed to converge after {restarts} restarts")]
    LanczosFailed { restarts: usize },

    #[error("calibration size n = {n} exceeds the dense-eigendecomposition budget (400)")]
    CalibrationTooLarge { n: usize },

    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(line: usize, col: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            col,
            message: message.into(),
        }
    }

    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
