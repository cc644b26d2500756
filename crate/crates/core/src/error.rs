//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("entry index ({i}, {j}) out of range for a {m}x{n} matrix")]
    IndexOutOfRange { i: usize, j: usize, m: usize, n: usize },

    #[error("duplicate observed entry at ({i}, {j})")]
    DuplicateEntry { i: usize, j: usize },

    #[error("observed matrix must contain at least one entry")]
    EmptySupport,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel width must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("residual vector is empty")]
    EmptyResidual,

    #[error("row has no observed entries")]
    EmptyRow,

    #[error("rank must satisfy 1 <= r <= min(m, n), got r = {r} for {m}x{n}")]
    BadRank { r: usize, m: usize, n: usize },

    #[error("observation fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),

    #[error("no mask with every row and column observed found in {attempts} attempts")]
    MaskCoverage { attempts: usize },

    #[error("row {0} of the observation mask is empty; factor row unidentifiable")]
    UnidentifiableRow(usize),

    #[error("column {0} of the observation mask is empty; factor column unidentifiable")]
    UnidentifiableColumn(usize),

    #[error("row subproblem has no observed entries")]
    DegenerateRow,

    #[error("linear solve failed even after ridge regularization")]
    NumericalFailure,

    #[error("search direction is zero")]
    ZeroDirection,

    #[error("zero curvature along a nonzero direction; step size undefined")]
    ZeroCurvature,

    #[error("reference matrix has zero norm")]
    ZeroTruth,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("factor entries must be finite")]
    NonFiniteFactor,
}
