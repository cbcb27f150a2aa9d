use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected length {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(
        "point {index} does not conform to the space: expected length {expected}, found {found}"
    )]
    NonconformingPoint {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid cluster count K={k} for n={n}")]
    InvalidClusterCount { k: usize, n: usize },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("label {label} at index {index} is outside 1..={k}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        k: usize,
    },

    #[error("instance too large for exhaustive search: n={n} exceeds {max}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("only {usable} usable tail grid points (need at least {required}); increase trials")]
    InsufficientTail { usable: usize, required: usize },

    #[error("symmetric eigensolver failed: {0}")]
    Eigen(String),

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
