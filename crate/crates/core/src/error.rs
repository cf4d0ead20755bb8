use thiserror::Error;

/// Errors raised while building a problem or running one of the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("dilation/erosion radius must be nonnegative, got {0}")]
    NegativeRadius(f64),

    #[error("invalid system model: {0}")]
    InvalidModel(String),

    #[error("invalid risk specification: {0}")]
    InvalidRisk(String),

    #[error("invalid state grid: {0}")]
    InvalidGrid(String),

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("invalid loss sample: {0}")]
    InvalidSample(String),

    #[error("finite values are not contiguous on the grid (gap between nodes {left} and {right})")]
    NonContiguousFiniteRegion { left: usize, right: usize },

    #[error("terminal cost is not finite at grid node {0}")]
    DegenerateTerminal(f64),

    #[error("state {x} is infeasible at stage {stage}")]
    InfeasibleState { stage: usize, x: f64 },

    #[error("stage {stage} out of range (horizon {horizon})")]
    StageOutOfRange { stage: usize, horizon: usize },

    #[error("number of trajectories must be at least 1")]
    NoTrajectories,
}

pub type Result<T> = std::result::Result<T, Error>;
