use thiserror::Error;

/// Errors raised across the estimation, solver and data pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data for class {class}: need at least {needed} samples, got {got}")]
    InsufficientData {
        class: String,
        needed: usize,
        got: usize,
    },

    #[error("matrix is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate rule: beta is identically zero, risk is undefined")]
    DegenerateRule,

    #[error("solver diverged after {iterations} iterations")]
    SolverDiverged { iterations: usize },

    #[error("estimator infeasible: {0}")]
    EstimatorInfeasible(String),

    #[error("tuning failed: {0}")]
    TuningFailed(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
