use thiserror::Error;

pub type Result<T> = std::result::Result<T, OuqError>;

#[derive(Debug, Error)]
pub enum OuqError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    #[error("invalid atom: {0}")]
    InvalidAtom(String),

    #[error("distribution weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("degenerate solution: every cell weight is below the floor {0:e}")]
    DegenerateSolution(f64),

    #[error("cannot merge atoms {0} and {1}: {2}")]
    Merge(usize, usize, String),

    #[error("solver did not reach optimality (status {0})")]
    NotOptimal(String),

    #[error("solver setup failed: {0}")]
    Solver(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("objective not piecewise concave via vertex enumeration: {0}")]
    VertexEnumeration(String),

    #[error("linear program is unbounded")]
    UnboundedLp,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
