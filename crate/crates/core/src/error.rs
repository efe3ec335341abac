use thiserror::Error;

use crate::polymer::PolymerState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polymer state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid norm parameters: {0}")]
    InvalidNorm(String),

    #[error("degenerate slope window: {points} point(s), need at least 2")]
    DegenerateWindow { points: usize },

    #[error("coordinate index 0 is pinned and carries no potential")]
    PinnedIndex,

    #[error("time {time} is not a multiple of the grid step {dt}")]
    OffGrid { time: f64, dt: f64 },

    #[error("steering window infeasible: {0}")]
    InfeasibleSteering(String),

    #[error("step-size condition violated: dt*(2 + L_f) = {value} > 1")]
    StepCondition { value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration produced a non-finite state at step {step} (t = {time})")]
    IntegrationFailure {
        step: u64,
        time: f64,
        /// Last state whose coordinates were all finite.
        last_finite: Box<PolymerState<f64>>,
    },

    #[error("backward-in-time integration is not supported (requested start time {0} > 0)")]
    BackwardIntegration(f64),

    #[error("grid oracle limited to n <= 3 (got n = {0})")]
    OracleTooLarge(usize),

    #[error("quadrature box too small: boundary density ratio {ratio:.3e} exceeds 1e-8 on coordinate {coord}")]
    BoxTooSmall { coord: usize, ratio: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed trajectory file: {0}")]
    Format(String),
}
