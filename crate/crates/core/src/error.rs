use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge within {terms} terms (partial sum {partial_sum:e})")]
    Truncation { terms: usize, partial_sum: f64 },

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Accuracy { estimate: f64, tolerance: f64 },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("rejection sampler acceptance rate {rate:e} below 1e-4; use a finer time grid")]
    Efficiency { rate: f64 },

    #[error("nested Monte Carlo budget exceeded: {requested} inner samples > {budget}")]
    Budget { requested: u64, budget: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
