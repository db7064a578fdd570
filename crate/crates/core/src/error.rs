use alloc::string::String;

/// Failures reported by the solvers and experiment drivers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter or field layout violates a documented invariant.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
    /// An argument outside the operation's domain (e.g. `p < 1` for a norm).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A solve produced non-finite values or missed its tolerance.
    #[error("numerical failure in {what} at step {step}: residual {residual:e}")]
    Numerical { what: &'static str, step: usize, residual: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: &str, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
