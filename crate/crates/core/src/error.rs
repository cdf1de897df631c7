use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (angle ranges, unit norms).
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent sizes, counts or configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// The request exceeds what the dense paths can hold in memory.
    #[error("resource error: {0}")]
    Resource(String),
    /// A numerical routine failed (eigensolver breakdown, non-Hermitian input).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last energy delta {last_delta:e})")]
    Convergence { iterations: usize, last_delta: f64 },
    /// A cache file failed its integrity check.
    #[error("cache integrity error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
