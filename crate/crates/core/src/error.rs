use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse { file: PathBuf, line: u64, msg: String },

    #[error("{file}: empty run")]
    EmptyRun { file: PathBuf },

    #[error("run {run_id} too short: {len} steps, need at least {need}")]
    RunTooShort { run_id: String, len: usize, need: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("network needs at least one layer")]
    EmptyDims,

    #[error("invalid class index {index} for {classes} classes")]
    InvalidClass { index: usize, classes: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("source pool has no eligible entry")]
    PoolEmpty,

    #[error("non-finite loss in {network}")]
    NonFinite { network: String },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Parse { .. }
            | Error::EmptyRun { .. }
            | Error::RunTooShort { .. }
            | Error::Data(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 3,
            Error::NonFinite { .. } => 4,
            Error::Shape(_) | Error::EmptyDims | Error::InvalidClass { .. } | Error::Topology(_) | Error::PoolEmpty => {
                4
            }
        }
    }
}
