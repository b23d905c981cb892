//! SQPC checkpoint files.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! offset    size     field
//! 0         4        magic "SQPC"
//! 4         2        version (u16) = 1
//! 6         8        header length h (u64, bytes)
//! 14        h        JSON header (UTF-8)
//! 14+h      8        parameter count p (u64)
//! 22+h      8·p      parameters (f64)
//! ```
//!
//! The header holds the network configuration, the feature and target
//! normalization, the training configuration and history, and the name and
//! length of every tensor. Parameters follow [`NetworkParams::tensors`]
//! order: first-layer forward LSTM (gates f, i, o, c, each `w_x, w_h, b`),
//! backward LSTM, merge, stacked layers bottom-up, head.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqpress_core::rnn::{NetworkConfig, NetworkParams};
use seqpress_core::train::{Checkpoint, EpochRecord, FeatureNormalization, TargetScaling, TrainConfig};

use crate::error::{AppError, Result};
use crate::formats::waveform::atomic_write;

pub const SQPC_MAGIC: &[u8; 4] = b"SQPC";
pub const SQPC_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub features: FeatureNormalization,
    pub targets: TargetScaling,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = CheckpointHeader {
        network: ck.params.config,
        features: ck.features.clone(),
        targets: ck.targets,
        train_config: ck.train_config.clone(),
        history: ck.history.clone(),
        tensors: ck.params.tensors().iter().map(|t| TensorEntry { name: t.name.clone(), len: t.data.len() }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let flat = ck.params.to_flat();
    let mut out = Vec::with_capacity(22 + json.len() + 8 * flat.len());
    out.extend_from_slice(SQPC_MAGIC);
    out.extend_from_slice(&SQPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    if bytes.len() < 14 || &bytes[..4] != SQPC_MAGIC {
        return Err("not an SQPC checkpoint".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SQPC_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let u64_at = |o: usize| -> std::result::Result<u64, String> {
        bytes.get(o..o + 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes"))).ok_or("truncated checkpoint".into())
    };
    let h = usize::try_from(u64_at(6)?).map_err(|_| "header length overflows")?;
    let body = 14usize.checked_add(h).ok_or("header length overflows")?;
    let json = bytes.get(14..body).ok_or("truncated header")?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| format!("bad header: {e}"))?;
    let p = usize::try_from(u64_at(body)?).map_err(|_| "parameter count overflows")?;
    let blob_start = body + 8;
    if p.checked_mul(8).and_then(|b| b.checked_add(blob_start)) != Some(bytes.len()) {
        return Err(format!("parameter count {p} disagrees with file size"));
    }
    let flat: Vec<f64> = bytes[blob_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = NetworkParams::zeros(header.network).map_err(|e| e.to_string())?;
    let layout: Vec<TensorEntry> =
        params.tensors().iter().map(|t| TensorEntry { name: t.name.clone(), len: t.data.len() }).collect();
    if layout != header.tensors {
        return Err("tensor layout in header does not match the network configuration".into());
    }
    params.load_flat(&flat).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        params,
        features: header.features,
        targets: header.targets,
        train_config: header.train_config,
        history: header.history,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    atomic_write(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|m| AppError::format(path, m))
}
