//! Harness-level errors.

use std::io;
use std::path::PathBuf;

use qsagent_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version mismatch: found {found:?}, expected version {expected}")]
    VersionMismatch { found: String, expected: u32 },
    #[error("truncated checkpoint file (missing end marker)")]
    Truncated,
    #[error("invalid config value for {key}: {message}")]
    ConfigValue { key: String, message: String },
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("malformed config line: {0}")]
    MalformedLine(String),
    #[error("unknown sweep parameter: {0} (expected l_max, alpha, or theta_match)")]
    UnknownParameter(String),
    #[error("checkpoint memory is empty")]
    EmptyMemory,
    #[error("training diverged at episode {episode}: {source}")]
    Divergence {
        episode: u64,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
