use thiserror::Error;

pub type Result<T> = std::result::Result<T, SblError>;

#[derive(Debug, Error)]
pub enum SblError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("component index {index} out of range for rank {rank}")]
    ComponentOutOfRange { index: usize, rank: usize },

    #[error("objective became non-finite in restart {restart} at sweep {iteration}")]
    NonFiniteObjective { restart: usize, iteration: usize },

    #[error("all {restarts} restarts aborted; last failure: {last}")]
    AllRestartsFailed { restarts: usize, last: Box<SblError> },

    #[error("replicate {replicate} (seed {seed}) failed: {source}")]
    ReplicateFailed {
        replicate: usize,
        seed: u64,
        #[source]
        source: Box<SblError>,
    },
}

impl SblError {
    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            SblError::NonFiniteObjective { .. } | SblError::AllRestartsFailed { .. } => true,
            SblError::ReplicateFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
