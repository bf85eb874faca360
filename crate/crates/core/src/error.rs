use crate::conic::SolveStatus;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error("disturbance matrix E_{0} does not have full column rank")]
    RankDeficient(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver returned {status:?}: {message}")]
    Solver { status: SolveStatus, message: String },
    #[error("constraint row {0} cannot be satisfied even without disturbances")]
    InfeasibleConstraint(usize),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("state became non-finite at step {0}")]
    NonFinite(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
