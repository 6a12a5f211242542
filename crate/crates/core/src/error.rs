use thiserror::Error;

/// Errors raised by the geometry kernels, samplers, estimators and runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("step too large: distance {dist} exceeds injectivity guard {limit}")]
    StepTooLarge { dist: f64, limit: f64 },

    #[error("bridge splice rejected: remaining distance {dist} exceeds injectivity guard")]
    SpliceRejected { dist: f64 },

    #[error("heat kernel series did not reach tolerance {tol} within {max_terms} terms")]
    SeriesNotConverged { tol: f64, max_terms: usize },

    #[error("flow integration failed: {0}")]
    Integration(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
