use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("base dimension {0} is not in {{1, 2, 3}}")]
    BadDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("solder form is not injective (rank {rank} < {n})")]
    DegenerateSolder { rank: usize, n: usize },
    #[error("interpretation projection needs base dimension 3, got {0}")]
    NonSquareSolder(usize),
    #[error("negative square {0:e} under pseudo-metric")]
    NegativeSquare(f64),
    #[error("matrix is not a valid metric: {0}")]
    InvalidMetric(String),
    #[error("total map is not invertible")]
    NotInvertible,
    #[error("singular block at grid node {0}")]
    Singular(usize),
    #[error("kernel dimension {found}, expected {expected}")]
    KernelDimMismatch { expected: usize, found: usize },
    #[error("grid has {count} points along axis {axis}; at least {min} required")]
    GridTooSmall { axis: usize, count: usize, min: usize },
    #[error("unknown placement family `{0}`")]
    UnknownFamily(String),
    #[error("inadmissible parameters: {0}")]
    InadmissibleParams(String),
    #[error("placement is not micro-linear")]
    NotMicroLinear,
    #[error("covariant derivative needs a linear connection")]
    AffineConnectionNotSupported,
    #[error("path leaves the grid at {0:?}")]
    PathOutsideGrid(Vec<f64>),
    #[error("inconsistent invariants: {0}")]
    Inconsistent(String),
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
