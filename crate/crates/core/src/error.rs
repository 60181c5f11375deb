use std::path::PathBuf;

use thiserror::Error;

/// Invalid input to a physical-layer primitive.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhyError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}: length {got} is not a multiple of {multiple}")]
    NotMultiple {
        what: &'static str,
        multiple: usize,
        got: usize,
    },
    #[error("{0}: input must not be empty")]
    Empty(&'static str),
    #[error("bit value {value} at index {index} is not 0 or 1")]
    InvalidBit { index: usize, value: u8 },
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Failure reading or writing a capture store, dataset or config file.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic, not a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: format version {found} is not supported (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: file is truncated ({detail})")]
    Truncated { path: PathBuf, detail: String },
    #[error("{path}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },
    #[error("{path}: malformed record at line {line}: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}: inconsistent store: {detail}")]
    Inconsistent { path: PathBuf, detail: String },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// File or directory the error refers to.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            StoreError::Io { path, .. }
            | StoreError::BadMagic { path, .. }
            | StoreError::VersionMismatch { path, .. }
            | StoreError::Truncated { path, .. }
            | StoreError::ChecksumMismatch { path, .. }
            | StoreError::Malformed { path, .. }
            | StoreError::Inconsistent { path, .. } => Some(path),
        }
    }
}

pub(crate) fn check_bits(bits: &[u8]) -> Result<(), PhyError> {
    match bits.iter().position(|&b| b > 1) {
        Some(index) => Err(PhyError::InvalidBit {
            index,
            value: bits[index],
        }),
        None => Ok(()),
    }
}
