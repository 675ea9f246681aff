//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("linearly dependent constraint row {row}: {detail}")]
    LinearDependence { row: usize, detail: String },

    #[error("active-set cycle detected after {exchanges} exchanges")]
    Cycle { exchanges: usize },

    #[error("active-set iteration cap ({cap}) exceeded")]
    ExchangeCap { cap: usize },

    #[error("interior-point solver did not converge after {iterations} iterations")]
    IpNoConvergence { iterations: usize },

    #[error("step failed at t = {time:.4} s: {detail}")]
    StepFailure { time: f64, detail: String },

    #[error("simulation failed at frame {frame}: {source}")]
    SimulationFailure {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("benchmark invalid: {0}")]
    BenchmarkInvalid(String),

    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
