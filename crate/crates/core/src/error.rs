use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("structural condition violated: {0}")]
    Structure(String),

    #[error("linear solve failed: relative residual {residual:.3e} exceeds {tolerance:.1e}")]
    SolverFailure { residual: f64, tolerance: f64 },

    #[error("reference integrator did not converge: halving changed the result by {relative_change:.3e}")]
    Oracle { relative_change: f64 },

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
