use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad user input: arguments, configs, malformed files.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Tensors or indices that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("non-finite point coordinate at index {index}")]
    NonFinitePoint { index: usize },

    #[error("non-finite attention logits at voxel {voxel}")]
    NonFiniteLogits { voxel: usize },

    #[error("non-finite gradient in parameter slice `{slice}`")]
    NonFiniteGradient { slice: String },

    #[error("requested {requested} clusters but only {distinct} distinct masks are available")]
    TooFewDistinctMasks { requested: usize, distinct: usize },

    #[error("backward called without a retained forward trace")]
    MissingTrace,

    #[error("loss function is not deterministic: {first} != {second}")]
    NonDeterministicLoss { first: f64, second: f64 },

    #[error("loss became non-finite at epoch {epoch}; last good checkpoint: {checkpoint:?}")]
    NanLoss {
        epoch: usize,
        checkpoint: Option<PathBuf>,
    },

    /// Any other numerical failure (gradcheck over threshold, diverging values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_)
            | Error::Structural(_)
            | Error::NonFinitePoint { .. }
            | Error::TooFewDistinctMasks { .. }
            | Error::MissingTrace
            | Error::Json(_) => 1,
            Error::NonFiniteLogits { .. }
            | Error::NonFiniteGradient { .. }
            | Error::NonDeterministicLoss { .. }
            | Error::NanLoss { .. }
            | Error::Numerical(_) => 2,
            Error::Io { .. } | Error::Csv(_) => 3,
        }
    }
}
