use thiserror::Error;

/// Errors raised by the numerical kernels, solvers and I/O helpers.
#[derive(Debug, Error)]
pub enum LbsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    /// Monotone descent was violated while runtime descent checking was on.
    #[error(
        "descent violation at iteration {iter}: objective rose from {before} to {after}; \
         check c < mu/(2 lambda) and rho < 1/L"
    )]
    Descent { iter: usize, before: f64, after: f64 },

    #[error("training fault: {0}")]
    Training(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LbsError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LbsError::Dimension(msg.into()))
}
