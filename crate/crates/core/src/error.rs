use thiserror::Error;

use crate::boxtree::BoxKey;

/// Failure inside a model evaluation (integrator blow-up, invalid state).
#[derive(Debug, Clone, Error, PartialEq)]
#[error("model failure at t = {time}: {message}")]
pub struct ModelError {
    pub time: f64,
    pub message: String,
}

impl ModelError {
    pub fn new(time: f64, message: impl Into<String>) -> Self {
        Self {
            time,
            message: message.into(),
        }
    }

    pub fn non_finite(time: f64) -> Self {
        Self::new(time, "non-finite state")
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty covering: {0}")]
    EmptyCovering(String),

    #[error("evaluation failed in box {key} at point {point:?}: {source}")]
    Evaluation {
        key: BoxKey,
        point: Vec<f64>,
        #[source]
        source: ModelError,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
