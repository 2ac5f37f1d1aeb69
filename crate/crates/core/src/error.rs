use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("k = {k} out of range for {n} reference points (exclude_self = {exclude_self})")]
    KOutOfRange { k: usize, n: usize, exclude_self: bool },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("operation not supported by this environment: {0}")]
    Unsupported(&'static str),

    #[error("replay buffer holds {size} transitions, need at least {required}")]
    BufferTooSmall { size: usize, required: usize },

    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("run failed for method `{method}` seed {seed}: {source}")]
    RunFailed {
        method: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
