use thiserror::Error;

use crate::model::{ModelError, VertexId, Violation};
use crate::td::{ScheduleError, TdViolation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid model: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InvalidModel(Vec<Violation>),
    #[error("invalid tree decomposition: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InvalidDecomposition(Vec<TdViolation>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("near-singular self-loop at vertex {0}")]
    NearSingular(VertexId),
    #[error("divergent self-loop at vertex {0}")]
    Divergent(VertexId),
    #[error("discount factor {0} must lie in [1e-6, 1)")]
    Lambda(f64),
    #[error("system has {n} unknowns, above the dense limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("nullspace dimension is not 1 at pinned unknown {0}")]
    Nullspace(usize),
    #[error("strategy iteration did not converge within {0} rounds")]
    NoConvergence(usize),
    #[error("{0}")]
    Other(String),
}
