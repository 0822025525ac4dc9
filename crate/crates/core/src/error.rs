use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map onto the process exit codes used by the CLI:
/// `Io` -> 3, `Convergence` -> 4, `Domain`/`Precondition`/`Resource` -> 5.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested map.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition (parameter range, regime gate) is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative solver failed to reach its residual target.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// An exhaustive computation would exceed its enumeration cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
