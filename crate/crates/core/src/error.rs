use std::path::PathBuf;

/// Errors raised by the scoring, pacing and scheduling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),

    #[error("score record references unknown instance id {0:?}")]
    DanglingId(String),

    #[error("instance {id:?}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("missing noise score for train instance {0:?}")]
    MissingScore(String),

    #[error("{0}")]
    Domain(String),

    #[error(
        "maximum similarity is exactly 0; shift all similarities so the maximum is positive \
         before normalizing"
    )]
    DegenerateNormalization,

    #[error("curriculum state error: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("learner failed at step {step}: {source}")]
    Learner {
        step: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
