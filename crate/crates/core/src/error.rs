//! Crate-wide error type.

use crate::trace::SelectionTrace;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("source coincides with microphone {mic} (distance {distance:.3e} m)")]
    SourceAtMicrophone { mic: usize, distance: f64 },
    #[error("empty snapshot list")]
    EmptySnapshots,
    #[error("all raw transmission costs are zero")]
    DegenerateCosts,
    #[error("no sensors selected")]
    EmptySelection,
    #[error("selection vector is not boolean")]
    NotBoolean,
    #[error("matrix is not Hermitian: {0}")]
    NotHermitian(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no selection can reach the requested SNR fraction")]
    AlphaInfeasible,
    #[error("initial point isolated; increase R0")]
    EmptyCandidates,
    #[error("candidate set cannot expand further but the constraint is unmet")]
    CandidatesExhausted,
    #[error("iteration limit reached after {iterations} iterations")]
    IterationLimit {
        iterations: usize,
        trace: Box<SelectionTrace>,
    },
    #[error("no sensors within radius")]
    EmptyRadius,
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
