use std::path::PathBuf;

use sitefit_core::{PhyError, StoreError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NrxError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("n_iters must be in 1..={max}, got {requested}")]
    Iterations { requested: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss in samples {sample_ids:?}")]
    NonFinite { sample_ids: Vec<u64> },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
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
}
