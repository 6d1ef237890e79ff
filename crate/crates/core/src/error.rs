use thiserror::Error;

/// Errors raised by estimation, simulation and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lag {lag} out of range for a series of length {len}")]
    LagOutOfRange { lag: isize, len: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    /// Raised when a matrix that must be inverted has reciprocal condition
    /// number below the cutoff.
    #[error("singular design: {what} has reciprocal condition {rcond:.3e}")]
    SingularDesign { what: &'static str, rcond: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),

    /// The conditional long-run variance is not positive, so the t-ratio is
    /// undefined. Expected under exact singularity.
    #[error("degenerate variance: conditional long-run variance {value:.3e} is not positive")]
    DegenerateVariance { value: f64 },

    /// The Wald middle matrix is singular; carries the numerical rank found.
    #[error("Wald middle matrix has rank {effective_rank} < {q}; rerun with allow_degenerate to pseudo-invert")]
    DegenerateWald { q: usize, effective_rank: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
