use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: expected length {expected}, got {got}")]
    InputDim { expected: usize, got: usize },

    #[error("rejected tape: recorded for a network with a different shape")]
    StaleTape,

    #[error("training diverged: non-finite gradient in net {net} layer {layer}")]
    GradientDivergence { net: usize, layer: usize },

    #[error("training diverged at step {step}: loss is {loss}")]
    LossDivergence { step: usize, loss: f64 },

    #[error("trajectory too short: {len} steps, chunk horizon is {horizon}")]
    TrajectoryTooShort { len: usize, horizon: usize },

    #[error("insufficient history: step {index} has fewer than {k} earlier steps")]
    InsufficientHistory { index: usize, k: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty mixture: at least one posterior is required")]
    EmptyMixture,

    #[error("policy `{policy}` needs a trained {model}")]
    MissingModel {
        policy: &'static str,
        model: &'static str,
    },

    #[error("rejected input: {0}")]
    Rejected(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: unsupported version header `{found}`")]
    Version { path: PathBuf, found: String },

    #[error("{path}: bad checkpoint: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
