//! Checkpoint file: the magic `GESTNAV1`, a little-endian `u64` header
//! length, a JSON header, then every tensor as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, PolicyParams, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::sim::Condition;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GESTNAV1";
const VERSION: u32 = 1;

/// Run context stored next to the model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub condition: Option<Condition>,
    pub anatomy_seed: u64,
    pub env_steps: u64,
    pub seed: u64,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self {
            condition: None,
            anatomy_seed: 0,
            env_steps: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderConfig {
    model: ModelConfig,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: HeaderConfig,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &PolicyParams, meta: &CheckpointMeta) -> Result<()> {
    let mut offset = 0u64;
    let tensors = TENSOR_NAMES
        .iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                byte_offset: offset,
            };
            offset += 8 * t.len() as u64;
            e
        })
        .collect();
    let header = Header {
        version: VERSION,
        config: HeaderConfig {
            model: params.config,
            meta: meta.clone(),
        },
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in params.tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(PolicyParams, CheckpointMeta)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(bad("header too large"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(&format!("header: {e}")))?;
    if header.version != VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    header.config.model.validate()?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut params = PolicyParams::zeros(header.config.model);
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(bad("wrong tensor count"));
    }
    for ((entry, name), slot) in header.tensors.iter().zip(TENSOR_NAMES).zip(params.tensors_mut()) {
        if entry.name != name || entry.shape != slot.shape() {
            return Err(bad(&format!(
                "tensor {} {:?} does not match expected {name} {:?}",
                entry.name,
                entry.shape,
                slot.shape()
            )));
        }
        let start = entry.byte_offset as usize;
        let end = start + 8 * slot.len();
        let bytes = payload.get(start..end).ok_or_else(|| bad("truncated payload"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        *slot = Tensor::from_vec(slot.shape(), data)?;
    }
    if !params.is_finite() {
        return Err(bad("non-finite weights"));
    }
    Ok((params, header.config.meta))
}

pub fn save_checkpoint(path: &Path, params: &PolicyParams, meta: &CheckpointMeta) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyParams, CheckpointMeta)> {
    let f = File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            hidden: 8,
            combiner: 8,
            ..ModelConfig::default()
        };
        let p = PolicyParams::init(cfg, 5).unwrap();
        let meta = CheckpointMeta {
            condition: Some(Condition::Referencing),
            anatomy_seed: 3,
            env_steps: 1280,
            seed: 9,
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, &meta).unwrap();
        assert_eq!(&bytes[..8], b"GESTNAV1");
        let (q, m) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(q, p);
        assert_eq!(m, meta);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &q, &m).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn header_layout() {
        let p = PolicyParams::zeros(ModelConfig {
            hidden: 2,
            ..ModelConfig::default()
        });
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, &CheckpointMeta::default()).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["version"], 1);
        assert_eq!(header["tensors"][0]["name"], "vision1.w");
        assert_eq!(header["tensors"][1]["byte_offset"], 8 * 256 * 352);
        assert_eq!(bytes.len(), 16 + len + 8 * p.num_params());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(read_checkpoint(&b"NOTACKPT"[..]).is_err());
        let p = PolicyParams::zeros(ModelConfig::default());
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, &CheckpointMeta::default()).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(Error::Checkpoint(_))));
    }
}
