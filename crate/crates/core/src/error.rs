use thiserror::Error;

/// Errors raised by the GFA library.
///
/// Variants are grouped so that a front end can map them onto exit codes:
/// argument/precondition problems, parse/config problems and numerical
/// failures.
#[derive(Debug, Error)]
pub enum GfaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric: |S[{row},{col}] - S[{col},{row}]| = {defect:e}")]
    NotSymmetric { row: usize, col: usize, defect: f64 },

    #[error("covariance is not positive semidefinite: minimum eigenvalue {min_eig:e} < -{tolerance:e}")]
    NotPsd { min_eig: f64, tolerance: f64 },

    #[error(
        "supplier inconsistency: eigenvalue {index} decreased from {previous:e} (n = {n_prev}) to {current:e} (n = {n})"
    )]
    SupplierInconsistency {
        index: usize,
        n_prev: usize,
        n: usize,
        previous: f64,
        current: f64,
    },

    #[error("no GFA decomposition detected at m = {m}: all tracked eigenvalues diverge")]
    NoDecomposition { m: usize },

    #[error("degenerate factor: eigenvalue {index} = {value:e} is below the rank tolerance {tolerance:e}")]
    DegenerateFactor { index: usize, value: f64, tolerance: f64 },

    #[error("loading column {column} is (numerically) in the span of the preceding columns")]
    RankDeficient { column: usize },

    #[error("insufficient replicates: factor sample covariance is singular ({replicates} replicates, {factors} factors)")]
    InsufficientReplicates { replicates: usize, factors: usize },

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GfaError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        GfaError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, GfaError>;
