//! Checkpoint container: magic "XPASSCK1", a length-prefixed JSON header
//! holding the full model configuration and a parameter manifest
//! (name, shape, byte offset), then little-endian f32 parameter blocks in
//! manifest order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

use super::{ModelConfig, ModelWeights};

const MAGIC: &[u8; 8] = b"XPASSCK1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset of this block from the start of the data section.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub manifest: Vec<ManifestEntry>,
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    config: &ModelConfig,
    weights: &ModelWeights<T>,
) -> Result<()> {
    let params = weights.parameters();
    let mut manifest = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, t) in &params {
        manifest.push(ManifestEntry { name: name.clone(), shape: t.shape(), offset });
        offset += (t.numel() * 4) as u64;
    }
    let header = CheckpointHeader { config: *config, manifest };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Data(format!("cannot encode checkpoint header: {e}")))?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in &params {
        for v in t.data() {
            w.write_all(&(v.to_f64_() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Data(format!("truncated checkpoint file: {e}")))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelConfig, ModelWeights<T>)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut len = [0u8; 4];
    read_exact(&mut r, &mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    read_exact(&mut r, &mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Data(format!("bad checkpoint header: {e}")))?;

    let weights = ModelWeights::<T>::init(&header.config)?;
    let params = weights.parameters();
    if params.len() != header.manifest.len() {
        return Err(Error::Data(format!(
            "checkpoint manifest has {} entries, model expects {}",
            header.manifest.len(),
            params.len()
        )));
    }
    let mut expected_offset = 0u64;
    let mut buf = [0u8; 4];
    for ((name, t), entry) in params.iter().zip(&header.manifest) {
        if entry.name != *name || entry.shape != t.shape() {
            return Err(Error::Data(format!(
                "manifest entry {} {:?} does not match expected parameter {} {:?}",
                entry.name,
                entry.shape,
                name,
                t.shape()
            )));
        }
        if entry.offset != expected_offset {
            return Err(Error::Data(format!(
                "manifest offset {} for {} (expected {})",
                entry.offset, entry.name, expected_offset
            )));
        }
        let n = t.numel();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            read_exact(&mut r, &mut buf)?;
            let v = f32::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "non-finite value in checkpoint parameter {name}"
                )));
            }
            data.push(T::from_f64_(v as f64));
        }
        t.set_data(data)?;
        expected_offset += (n * 4) as u64;
    }
    Ok((header.config, weights))
}
