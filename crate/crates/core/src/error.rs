use thiserror::Error;

use crate::minnorm_qp::SolverError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("function is unbounded below")]
    Unbounded,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step underflow at t = {time}: step {step:.3e} fell below the minimum")]
    StepUnderflow { time: f64, step: f64 },
    #[error("slope evaluation failed at {point:?}: {source}")]
    SlopeAt { point: Vec<f64>, source: SolverError },
    #[error("argmin set is unbounded; instance violates the bounded-argmin hypothesis")]
    UnboundedArgmin,
    #[error("instance generation failed: {0}")]
    Generation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
