use thiserror::Error;

pub type Result<T> = std::result::Result<T, MetaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("design matrix is rank deficient (rank {rank} < {p} columns)")]
    RankDeficient { rank: usize, p: usize },

    #[error("X^T W X is not positive definite at psi = {psi}")]
    Singular { psi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "fit did not converge after {iterations} iterations (last psi = {psi}, score = {score})"
    )]
    NotConverged {
        iterations: usize,
        psi: f64,
        score: f64,
    },

    #[error("root bracket not found: {0}")]
    BracketNotFound(String),

    #[error("negative deviance {0} exceeds solver tolerance")]
    NegativeDeviance(f64),
}
