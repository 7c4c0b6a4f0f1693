use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] gpslab_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid csv {path}: {reason}")]
    BadCsv { path: PathBuf, reason: String },
}

impl HarnessError {
    /// Process exit status: 2 parse, 3 invariant violation, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } => 2,
            HarnessError::Invalid(_) | HarnessError::Core(_) => 3,
            HarnessError::Io { .. } | HarnessError::BadCsv { .. } => 4,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
