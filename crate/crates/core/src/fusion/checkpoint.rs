//! Model checkpoint file: one JSON header line followed by
//! little-endian f32 parameter blobs.
//!
//! Blob order is the flattening order of [`Tensors`] (per active
//! branch w1, b1, w2, b2; joint1 w, b; joint2 w, b; dense w, b). When
//! optimizer state is included, the Adam first and second moments
//! follow the parameters in the same order. The header's `checksum` is
//! the CRC32 of all blob bytes.

use super::net::{FusionModel, Normalization, Tensors};
use super::train::AdamState;
use super::NetworkConfig;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "refpoint-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a checkpoint file (magic mismatch)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checksum mismatch: header says {expected:#010x}, blobs hash to {actual:#010x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("blob length {got} does not match configured parameter count {want}")]
    BlobLength { got: usize, want: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    net: NetworkConfig,
    norm: Normalization,
    seed: u64,
    best_epoch: usize,
    train_loss: f64,
    val_loss: f64,
    n_params: usize,
    has_adam: bool,
    adam_step: u64,
    checksum: u32,
}

/// A saved model plus the metadata needed to evaluate or resume it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FusionModel,
    pub seed: u64,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub adam: Option<AdamState>,
}

fn blob_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn blob_values(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let flat = ckpt.model.params.to_flat();
    let mut blobs = blob_bytes(&flat);
    if let Some(adam) = &ckpt.adam {
        blobs.extend(blob_bytes(&adam.m));
        blobs.extend(blob_bytes(&adam.v));
    }
    let checksum = crc32fast::hash(&blobs);
    let header = Header {
        magic: MAGIC.to_string(),
        version: VERSION,
        net: ckpt.model.cfg.clone(),
        norm: ckpt.model.norm.clone(),
        seed: ckpt.seed,
        best_epoch: ckpt.best_epoch,
        train_loss: ckpt.train_loss,
        val_loss: ckpt.val_loss,
        n_params: flat.len(),
        has_adam: ckpt.adam.is_some(),
        adam_step: ckpt.adam.as_ref().map(|a| a.step).unwrap_or(0),
        checksum,
    };
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    file.write_all(&blobs)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(CheckpointError::BadMagic)?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if header.version != VERSION {
        return Err(CheckpointError::BadVersion(header.version));
    }
    let blobs = &bytes[nl + 1..];
    let actual = crc32fast::hash(blobs);
    if actual != header.checksum {
        return Err(CheckpointError::Checksum {
            expected: header.checksum,
            actual,
        });
    }
    let mut params = Tensors::zeros(&header.net);
    let n = params.n_params();
    if header.n_params != n {
        return Err(CheckpointError::BlobLength {
            got: header.n_params,
            want: n,
        });
    }
    let expected_len = if header.has_adam { 3 * n * 4 } else { n * 4 };
    if blobs.len() != expected_len {
        return Err(CheckpointError::BlobLength {
            got: blobs.len() / 4,
            want: expected_len / 4,
        });
    }
    params.from_flat(&blob_values(&blobs[..n * 4]));
    let adam = header.has_adam.then(|| AdamState {
        step: header.adam_step,
        m: blob_values(&blobs[n * 4..2 * n * 4]),
        v: blob_values(&blobs[2 * n * 4..]),
    });
    Ok(Checkpoint {
        model: FusionModel {
            cfg: header.net,
            params,
            norm: header.norm,
        },
        seed: header.seed,
        best_epoch: header.best_epoch,
        train_loss: header.train_loss,
        val_loss: header.val_loss,
        adam,
    })
}
