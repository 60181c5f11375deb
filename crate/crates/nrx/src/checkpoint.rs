//! Checkpoint files, little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NRXW"
//! 4       2     version (1)
//! 6       4     header length H
//! 10      H     JSON header (config, seed, provenance, config hash)
//! 10+H    4 P   parameters as f32, in the order of `ParamLayout::tensors`
//! end-4   4     CRC-32 of all preceding bytes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::NrxError;
use crate::model::{NrxConfig, NrxModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NRXW";
pub const CHECKPOINT_VERSION: u16 = 1;

/// How a set of weights came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// `init`, `pretrain` or `finetune`.
    pub stage: String,
    pub batches: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Parameter hash of the starting point.
    pub parent: Option<String>,
    /// Identifier of the training data.
    pub data: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: NrxConfig,
    pub config_hash: String,
    pub n_params: usize,
    pub seed: u64,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &NrxConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Hash of the parameter bytes as stored on disk.
pub fn params_hash(model: &NrxModel<f32>) -> String {
    sha256_hex(&param_bytes(&model.params))
}

fn param_bytes(p: &[f32]) -> Vec<u8> {
    p.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn encode_checkpoint(model: &NrxModel<f32>, seed: u64, provenance: Provenance) -> Vec<u8> {
    let header = CheckpointHeader {
        config: model.cfg,
        config_hash: config_hash(&model.cfg),
        n_params: model.params.len(),
        seed,
        provenance,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(14 + json.len() + 4 * model.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&param_bytes(&model.params));
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(NrxModel<f32>, CheckpointHeader), NrxError> {
    let bad = |detail: String| NrxError::Checkpoint {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 14 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let want = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != want {
        return Err(bad("checksum mismatch".into()));
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let json = body.get(10..10 + hlen).ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.config_hash != config_hash(&header.config) {
        return Err(bad("config hash does not match config".into()));
    }
    let n = header.config.params().len();
    if header.n_params != n {
        return Err(bad(format!("header lists {} parameters, config needs {n}", header.n_params)));
    }
    let raw = &body[10 + hlen..];
    if raw.len() != 4 * n {
        return Err(bad(format!("expected {} parameter bytes, found {}", 4 * n, raw.len())));
    }
    let params: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut model = NrxModel::zeros(header.config)?;
    model.params = params;
    if !model.is_finite() {
        return Err(bad("non-finite weights".into()));
    }
    Ok((model, header))
}

pub fn save_checkpoint(path: &Path, model: &NrxModel<f32>, seed: u64, provenance: Provenance) -> Result<(), NrxError> {
    fs::write(path, encode_checkpoint(model, seed, provenance)).map_err(|source| NrxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(NrxModel<f32>, CheckpointHeader), NrxError> {
    let bytes = fs::read(path).map_err(|source| NrxError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    decode_checkpoint(&bytes, path)
}
