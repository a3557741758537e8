//! θ checkpoint: little-endian `u32` header length, a JSON header with the
//! architecture and block shapes, then every block as raw little-endian f32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PriorArch, PriorParams};
use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: PriorArch,
    blocks: Vec<BlockHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn save_params(p: &PriorParams, path: &Path) -> Result<()> {
    let header = Header {
        arch: p.arch,
        blocks: p
            .arch
            .blocks()
            .into_iter()
            .map(|(name, shape)| BlockHeader { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut bytes = Vec::with_capacity(4 + json.len() + 4 * p.num_params());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for b in &p.blocks {
        for v in b.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<PriorParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let schema = |message: &str| Error::Schema {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let len_bytes: [u8; 4] = bytes
        .get(..4)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| schema("truncated header"))?;
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(4..4 + hlen)
        .ok_or_else(|| schema("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| schema(&e.to_string()))?;
    let mut payload = bytes[4 + hlen..].chunks_exact(4);
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for b in &header.blocks {
        let n: usize = b.shape.iter().product();
        let data: Vec<f32> = payload
            .by_ref()
            .take(n)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        if data.len() != n {
            return Err(schema("truncated payload"));
        }
        blocks.push(Tensor::new(&b.shape, data)?);
    }
    if payload.next().is_some() || !payload.remainder().is_empty() {
        return Err(schema("trailing bytes"));
    }
    PriorParams::from_blocks(header.arch, blocks)
}
