use std::path::PathBuf;

use sitefit_core::{PhyError, StoreError};
use sitefit_nrx::NrxError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("test set and training data share {count} slots (first {first})")]
    Overlap { count: usize, first: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Nrx(#[from] NrxError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Path the error is about, if any.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Self::Invalid { path, .. } | Self::Io { path, .. } => Some(path),
            Self::Store(e) => e.path(),
            Self::Nrx(NrxError::Checkpoint { path, .. } | NrxError::Io { path, .. }) => Some(path),
            Self::Nrx(NrxError::Store(e)) => e.path(),
            _ => None,
        }
    }
}
