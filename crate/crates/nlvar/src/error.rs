//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation requires a piecewise family, got {0}")]
    FamilyMismatch(&'static str),

    #[error("common row space violated in regime {regime}: residual {residual:.3e}")]
    CrscViolation { regime: usize, residual: f64 },

    #[error("model is not a member of the target class: {0}")]
    NotMember(String),

    #[error("stationary model (r = p): no common-trend structure to analyse")]
    Stationary,

    #[error("no regime accepts the inverse candidate ({0})")]
    NoRegimeAccepts(String),

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("point is off the attractor: |theta(z) + mu| = {0:.3e}")]
    OffAttractor(f64),

    #[error("invalid transitory-shock count m = {m}: require 1 <= m <= r = {r}")]
    InvalidShockCount { m: usize, r: usize },

    #[error("matrix is not orthogonal: |Q'Q - I| = {0:.3e}")]
    NotOrthogonal(f64),

    #[error("json error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("csv error in {file} line {line}: {message}")]
    Csv {
        file: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 1 for domain errors, 2 for I/O and
    /// schema errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::Csv { .. } | Error::Io { .. }
            | Error::InvalidModel(_) | Error::DimensionMismatch(_) => 2,
            _ => 1,
        }
    }
}
