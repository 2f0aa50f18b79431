use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("intercellular CO2 must be positive, got {0} Pa")]
    NonPositiveCi(f64),
    #[error("parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("initial ci {ci0} Pa outside (0, {upper}) Pa")]
    InitialCiOutOfRange { ci0: f64, upper: f64 },
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no observations supplied")]
    EmptyObservations,
    #[error("need at least {min} samples, got {got}")]
    InvalidSampleCount { min: usize, got: usize },
    #[error("invalid fit option: {0}")]
    InvalidOption(String),
    #[error("observation file: {0}")]
    Csv(String),
}

impl From<csv::Error> for NumericsError {
    fn from(e: csv::Error) -> Self {
        NumericsError::Csv(e.to_string())
    }
}
