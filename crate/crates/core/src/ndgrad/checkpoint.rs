//! Parameter checkpoint file.
//!
//! Byte layout:
//!
//! | offset      | size   | content                                            |
//! |-------------|--------|----------------------------------------------------|
//! | 0           | 8      | magic `RXCKPT01`                                   |
//! | 8           | 4      | header length `H`, u32 little-endian               |
//! | 12          | `H`    | UTF-8 JSON header (see [`Header`])                 |
//! | 12 + `H`    | 8 · N  | every tensor's entries as f64 little-endian, in    |
//! |             |        | header order, each tensor row-major                |
//!
//! `N` is the total entry count implied by the header shapes; trailing bytes
//! are an error.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NdError, Tensor};

pub const MAGIC: &[u8; 8] = b"RXCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Model kind tag, e.g. `cnn`, `lr`, `mlp`.
    pub kind: String,
    pub tensors: Vec<NamedTensor>,
    /// Free-form architecture description needed to rebuild the model.
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

fn ck_err(msg: impl Into<String>) -> NdError {
    NdError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<(), NdError> {
    let header = Header {
        kind: ckpt.kind.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.tensor.shape().to_vec(),
            })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| ck_err(e.to_string()))?;
    let len = u32::try_from(header.len()).map_err(|_| ck_err("header too large"))?;
    let mut buf = Vec::with_capacity(12 + header.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&header);
    for t in &ckpt.tensors {
        for v in t.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| ck_err(e.to_string()))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint, NdError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| ck_err(e.to_string()))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ck_err("bad magic"));
    }
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12 + h;
    if bytes.len() < header_end {
        return Err(ck_err("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..header_end]).map_err(|e| ck_err(e.to_string()))?;
    let mut payload = bytes[header_end..].chunks_exact(8);
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let chunk = payload.next().ok_or_else(|| ck_err(format!("payload ends inside {}", entry.name)))?;
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        tensors.push(NamedTensor {
            tensor: Tensor::from_vec(&entry.shape, data)?,
            name: entry.name,
        });
    }
    if payload.next().is_some() || !payload.remainder().is_empty() {
        return Err(ck_err("trailing bytes after payload"));
    }
    Ok(Checkpoint {
        kind: header.kind,
        tensors,
        meta: header.meta,
    })
}
