//! Versioned binary checkpoints.
//!
//! Layout: magic `AVPCKPT2`, version u32, manifest length u32, UTF-8 JSON
//! manifest (config, metadata, tensor directory), float64 little-endian
//! payload, trailing CRC-64 over everything before it. Round trips are
//! bit-exact.

use super::{ModelConfig, ModelParams};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AVPCKPT2";
const VERSION: u32 = 2;

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub stage: u32,
    pub epoch: usize,
    pub metric_name: String,
    pub metric_value: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in f64 elements.
    offset: usize,
    numel: usize,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    config: ModelConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

// CRC-64/ECMA-182: polynomial 0x42F0E1EBA9EA3693, MSB-first, zero init.
fn crc64(bytes: &[u8]) -> u64 {
    const POLY: u64 = 0x42F0_E1EB_A9EA_3693;
    let mut crc = 0u64;
    for &b in bytes {
        crc ^= (b as u64) << 56;
        for _ in 0..8 {
            crc = if crc & (1 << 63) != 0 { (crc << 1) ^ POLY } else { crc << 1 };
        }
    }
    crc
}

pub fn save_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    cfg: &ModelConfig,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            numel: t.numel(),
        });
        offset += t.numel();
    }
    let manifest = Manifest { config: cfg.clone(), meta: meta.clone(), tensors };
    let manifest_json =
        serde_json::to_vec(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;

    let mut bytes = Vec::with_capacity(16 + manifest_json.len() + offset * 8 + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for (_, t) in params.iter() {
        for &v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc64(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_checkpoint_file(
    path: &Path,
    params: &ModelParams,
    cfg: &ModelConfig,
    meta: &CheckpointMeta,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    save_checkpoint(&mut buf, params, cfg, meta)?;
    buf.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, ModelConfig, CheckpointMeta)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 4 + 4 + 8 {
        return Err(Error::Format("checkpoint: file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "checkpoint: bad magic {:?}",
            String::from_utf8_lossy(&bytes[..8.min(bytes.len())])
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Version { found: version, supported: VERSION });
    }

    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored_crc = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let actual_crc = crc64(body);
    if stored_crc != actual_crc {
        return Err(Error::Corruption(format!(
            "checkpoint: CRC64 mismatch (stored {stored_crc:016x}, computed {actual_crc:016x})"
        )));
    }

    let manifest_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let manifest_end = 16 + manifest_len;
    if manifest_end > body.len() {
        return Err(Error::Format("checkpoint: manifest length exceeds file".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&body[16..manifest_end])
        .map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;

    let payload = &body[manifest_end..];
    if payload.len() % 8 != 0 {
        return Err(Error::Format("checkpoint: payload not a multiple of 8 bytes".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut tensors = BTreeMap::new();
    for entry in &manifest.tensors {
        let end = entry.offset + entry.numel;
        if end > values.len() {
            return Err(Error::Format(format!(
                "checkpoint: tensor `{}` exceeds payload",
                entry.name
            )));
        }
        let t = Tensor::new(entry.shape.clone(), values[entry.offset..end].to_vec())?;
        if tensors.insert(entry.name.clone(), t).is_some() {
            return Err(Error::DuplicateId(entry.name.clone()));
        }
    }
    let expected: usize = manifest.tensors.iter().map(|t| t.numel).sum();
    if expected != values.len() {
        return Err(Error::Format(format!(
            "checkpoint: payload holds {} values, manifest declares {expected}",
            values.len()
        )));
    }
    Ok((ModelParams::from_tensors(tensors), manifest.config, manifest.meta))
}

pub fn load_checkpoint_file(path: &Path) -> Result<(ModelParams, ModelConfig, CheckpointMeta)> {
    let file = std::fs::File::open(path)?;
    load_checkpoint(std::io::BufReader::new(file))
}
