use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),

    #[error("invalid parameter {key:?}: {reason}")]
    InvalidParam { key: String, reason: String },

    #[error("replica {index} failed: {source}")]
    Replica {
        index: u64,
        #[source]
        source: erosion_flow::Error,
    },

    #[error(transparent)]
    Core(#[from] erosion_flow::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Self::InvalidParam { key: key.to_string(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
