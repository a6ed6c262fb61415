use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("class index {class} out of range for {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    TrainingDiverged { epoch: usize },

    #[error("only {found} of {wanted} samples qualify for the evaluation pool")]
    InsufficientPool { wanted: usize, found: usize },

    #[error("degenerate gradient: every class-difference gradient vanishes")]
    DegenerateGradient,

    #[error("no misclassified starting point found within {queries} queries")]
    InitFailure { queries: usize },

    #[error("rank {rank} out of range 1..={num_classes}")]
    RankOutOfRange { rank: usize, num_classes: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("cosine similarity is undefined for a zero-norm operand")]
    UndefinedSimilarity,

    #[error("empty pool")]
    EmptyPool,

    #[error("duplicate report key: {0}")]
    KeyCollision(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
