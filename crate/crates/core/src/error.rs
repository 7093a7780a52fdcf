use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate entry at (row {row}, col {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("duplicate rating for user `{user}`, item `{item}` on line {line}")]
    DuplicateLine {
        line: usize,
        user: String,
        item: String,
    },

    #[error("index (row {row}, col {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("rating {value} at (row {row}, col {col}) outside range [{min}, {max}]")]
    RatingOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("non-finite rating at (row {row}, col {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix has no observed entries")]
    EmptyMatrix,

    #[error("canonicalization did not converge: residual {residual:e} after {max_iter} iterations")]
    NoConvergence { residual: f64, max_iter: usize },

    #[error("observed rating at (row {row}, col {col}) is not strictly positive ({value})")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid rank k={k} (must satisfy 1 <= k <= {max})")]
    InvalidRank { k: usize, max: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("plain mode requires a fill policy")]
    MissingFillPolicy,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no scorable test cells")]
    NoScorableCells,

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of an iterative numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::NumericalFailure(_))
    }
}
