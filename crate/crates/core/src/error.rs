//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Matrix shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Data are degenerate for the requested operation (e.g. zero-variance column).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A numerical kernel failed (overflow, Cholesky breakdown, exhausted backtracking).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The argument left the domain of the log-det acyclicity function.
    /// Path-following solvers catch this and backtrack.
    #[error("log-det domain violation: sI - W\u{2218}W is not an M-matrix")]
    LdetDomain,

    /// An iterative solver hit its iteration/penalty budget without converging.
    #[error("solver failed to converge: {0}")]
    NonConvergence(String),

    /// A numerical failure inside an iterative solver. Carries the last
    /// finite iterate for diagnostics.
    #[error("solver breakdown: {message}")]
    SolverBreakdown {
        message: String,
        last: Box<ndarray::Array2<f64>>,
    },

    /// A requested configuration cannot produce data (e.g. MCAR keep rate too low).
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// File or stream I/O failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file could not be parsed.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
