use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown triangle id {0}")]
    UnknownTriangle(usize),
    #[error("degenerate triangle (zero or negative area)")]
    DegenerateTriangle,
    #[error("zero-length edge")]
    ZeroLengthEdge,
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("edge parameter {s} outside [0, {len}]")]
    ParameterOutsideEdge { s: f64, len: f64 },
    #[error("boundary vertex {0} has no boundary classification")]
    MissingClassification(usize),
    #[error("Cordes condition violated: sampled epsilon {0} <= 0")]
    CordesViolated(f64),
    #[error("local Gram matrix is not positive definite on element {0}")]
    GramNotSpd(usize),
    #[error("global system is singular: {0}")]
    SingularSystem(String),
    #[error("Fortin moment constraints infeasible (residual {0:e})")]
    InfeasibleMoments(f64),
    #[error("solution carries no residual representers")]
    MissingRepresenters,
    #[error("non-finite boundary data at vertex {0}")]
    NonFiniteBoundaryData(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
