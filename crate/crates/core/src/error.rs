use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular matrix: pivot magnitude {0:e} below tolerance")]
    SingularMatrix(f64),
    #[error("iterative scheme exceeded its iteration cap")]
    NonConvergence,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory diverged at step {0}")]
    Diverged(usize),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("policy is not stable for this problem")]
    UnstablePolicy,
    #[error("perturbed policy is unstable")]
    UnstablePerturbation,
    #[error("singular mass matrix in cartpole dynamics")]
    SingularMassMatrix,
    #[error("config error: {0}")]
    ConfigError(String),
    #[error("no step size in the search range met the success criterion")]
    NoConvergentStepsize,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
