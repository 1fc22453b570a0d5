use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("window difference matrix is rank deficient (rank {rank} of {width})")]
    RankDeficientWindow { rank: usize, width: usize },

    #[error("Krylov span check: rank {rank} < {requested} (requested dimension exceeds the grade)")]
    SpanRankDeficient { requested: usize, rank: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix has complex eigenvalue {re} + {im}i")]
    ComplexSpectrum { re: f64, im: f64 },

    #[error("matrix is not diagonalizable: {0}")]
    NotDiagonalizable(String),

    #[error("linear program is {0}")]
    LinearProgram(&'static str),

    #[error("histories come from different problems ({left} vs {right})")]
    FingerprintMismatch { left: String, right: String },

    #[error("operator is singular or numerically singular")]
    Singular,

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
