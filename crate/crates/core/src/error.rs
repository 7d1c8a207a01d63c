use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model is not identifiable: every response is censored")]
    NonIdentifiable,

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("too few observations: n = {n} but at least {required} are needed")]
    TooFewObservations { n: usize, required: usize },

    #[error("bootstrap replicate {replicate} stayed degenerate after {attempts} draws")]
    DegenerateReplicate { replicate: usize, attempts: usize },

    #[error("out-of-bag complement is empty")]
    EmptyComplement,

    #[error("penalty undefined for n = {n}, k = {k}")]
    PenaltyUndefined { n: usize, k: usize },

    #[error("no candidate family could be fitted")]
    NoFeasibleFamily,
}
