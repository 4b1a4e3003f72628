use thiserror::Error;

use crate::meqdsl::DslError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("no steady state: {0}")]
    NoSteadyState(String),

    #[error("covariance lost positive definiteness at t = {t}; retry with a smaller dt")]
    IntegrationInstability { t: f64 },

    #[error("trajectory {trajectory} diverged at step {step}")]
    Divergence { trajectory: usize, step: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("undefined for an improper state: {0}")]
    ImproperState(String),

    #[error("detailed balance is only defined for centred stationary states (|mean| = {0:e})")]
    NonzeroMean(f64),

    #[error("singular formula: {0}")]
    SingularFormula(String),

    #[error(transparent)]
    Dsl(#[from] DslError),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoSteadyState(_)
                | Error::IntegrationInstability { .. }
                | Error::Divergence { .. }
                | Error::SingularFormula(_)
        )
    }
}
