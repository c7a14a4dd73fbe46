use thiserror::Error;

/// Errors produced by the analytic model, the generators and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure did not converge. `partial` carries the best
    /// value reached before giving up.
    #[error("numerical failure: {message} (partial value {partial})")]
    Numerical { message: String, partial: f64 },

    /// A configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A rate trace could not be parsed.
    #[error("trace line {line}: {message}")]
    TraceParse { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
