use std::fmt;

use crate::point::GlobalPointId;

/// Errors raised by the merge pipeline and its building blocks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("partition {partition} contains point ({x}, {y}) more than once")]
    DuplicatePointInPartition { partition: usize, x: f64, y: f64 },

    #[error("id {id} assigned to both ({x0}, {y0}) and ({x1}, {y1})")]
    IdCollision {
        id: GlobalPointId,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },

    #[error("invalid partition {partition}: {reason}")]
    InvalidPartition { partition: usize, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("graph is disconnected: {} components", count_labels(.labels))]
    DisconnectedGraph { labels: Vec<usize> },

    #[error("partition graph is disconnected: components {components:?}")]
    DisconnectedPartitionGraph { components: Vec<Vec<usize>> },

    #[error("least-squares system is singular: {0}")]
    SingularSystem(String),

    #[error("Dirichlet problem has an empty boundary")]
    EmptyBoundary,

    #[error("invalid Dirichlet problem: {0}")]
    InvalidProblem(String),

    #[error(
        "conjugate gradient did not converge: residual {achieved:e} > {tolerance:e} after {iterations} iterations"
    )]
    ConvergenceFailure {
        iterations: usize,
        achieved: f64,
        tolerance: f64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("point sets differ: {0}")]
    IdMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn count_labels(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, attached to errors coming out of [`crate::merge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    AssignIds,
    Overlaps,
    Graphs,
    PairMeans,
    Offsets,
    ApplyOffsets,
    Correction { degree: u32 },
    Finalize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::AssignIds => f.write_str("assign-ids"),
            Stage::Overlaps => f.write_str("overlaps"),
            Stage::Graphs => f.write_str("graphs"),
            Stage::PairMeans => f.write_str("pair-means"),
            Stage::Offsets => f.write_str("offsets"),
            Stage::ApplyOffsets => f.write_str("apply-offsets"),
            Stage::Correction { degree } => write!(f, "correction[P={degree}]"),
            Stage::Finalize => f.write_str("finalize"),
        }
    }
}

/// An [`Error`] tagged with the stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct MergeError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl MergeError {
    pub fn new(stage: Stage, source: Error) -> Self {
        Self { stage, source }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, MergeError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T, MergeError> {
        self.map_err(|e| MergeError::new(stage, e))
    }
}
