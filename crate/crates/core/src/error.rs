use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// The adaptive integrator could not make progress.
    #[error("numerical failure at t = {t} ps: step {step:e} ps, error estimate {error_estimate:e}")]
    NumericalFailure {
        t: f64,
        step: f64,
        error_estimate: f64,
    },

    #[error("no convergence: {0}")]
    ConvergenceFailure(String),

    /// A decay curve without a burst or dip above the baseline noise.
    #[error("no feature: extremum deviates {deviation:e} from baseline, threshold {threshold:e}")]
    NoFeature { deviation: f64, threshold: f64 },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
