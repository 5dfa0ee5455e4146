use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The deformation parameter is not a positive finite number.
    #[error("q must be positive and finite (got {0})")]
    InvalidQ(String),

    /// An index argument violates its ordering precondition (e.g. `s > n`).
    #[error("index out of range: {0}")]
    Index(String),

    /// A series argument or distribution parameter lies outside the region
    /// where the underlying series converges.
    #[error("outside convergence domain: {0}")]
    Domain(String),

    #[error("series did not converge within {0} terms")]
    NonConvergence(usize),

    #[error("invalid density: {0}")]
    Density(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Exact division was requested but the divisor does not divide evenly.
    #[error("inexact division")]
    InexactDivision,
}

impl Error {
    /// True for failures caused by an inadmissible `q` or `(q, lambda)` pair.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::InvalidQ(_) | Error::Domain(_))
    }
}
