//! Checkpoint files: the magic `LENSNET1`, a little-endian `u64` header
//! length, a JSON header, then every tensor as little-endian `f64` in header
//! order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LensNet, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const MAGIC: &[u8; 8] = b"LENSNET1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Shape,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    seed: u64,
    step: u64,
    tensors: Vec<TensorEntry>,
}

/// A restored network and the optimizer step it was saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: LensNet,
    pub step: u64,
}

pub fn encode_checkpoint(net: &LensNet, step: u64) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: net.config().clone(),
        seed: net.config().seed,
        step,
        tensors: net.params().iter().map(|p| TensorEntry { name: p.name.clone(), shape: p.value.shape() }).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::config(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * net.count_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params().iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, net: &LensNet, step: u64) -> Result<()> {
    let bytes = encode_checkpoint(net, step)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_checkpoint(bytes: &[u8], source_name: &str) -> Result<Checkpoint> {
    let parse = |offset: usize, message: String| Error::Parse { source_name: source_name.to_string(), offset, message };
    if bytes.len() < 16 {
        return Err(parse(0, format!("file is {} bytes, shorter than the 16-byte preamble", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(parse(0, "missing LENSNET1 magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(len))
        .ok_or_else(|| parse(8, format!("header length {len} exceeds the file")))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| parse(16 + e.column(), format!("invalid header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(parse(16, format!("unsupported format version {}", header.format_version)));
    }
    let mut net = LensNet::construct(header.config, None)?;
    if header.tensors.len() != net.params().len() {
        return Err(parse(
            16,
            format!("header lists {} tensors, configuration defines {}", header.tensors.len(), net.params().len()),
        ));
    }
    let mut offset = 16 + len;
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let end = offset + 8 * count;
        let raw = bytes.get(offset..end).ok_or_else(|| {
            parse(
                offset,
                format!("payload of '{}' needs {} bytes, {} remain", entry.name, 8 * count, bytes.len() - offset),
            )
        })?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let tensor = Tensor::from_vec(entry.shape, data).map_err(|e| parse(offset, e.to_string()))?;
        net.params_mut().set(&entry.name, tensor).map_err(|e| parse(offset, e.to_string()))?;
        offset = end;
    }
    if offset != bytes.len() {
        return Err(parse(offset, format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok(Checkpoint { net, step: header.step })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}
