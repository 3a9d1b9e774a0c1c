//! Parameter checkpoints: an 8-byte magic, a little-endian `u64` header
//! length, a UTF-8 JSON header and the flat little-endian parameter array.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{param_count, DenoiserParams, ParamGroup};
use super::real::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"M2MCKPT\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub groups: Vec<GroupShape>,
    pub seed: u64,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<String>,
}

impl CheckpointHeader {
    pub fn new<T: Real>(seed: u64, step: u64, position: Option<String>) -> Self {
        Self {
            dtype: T::NAME.to_string(),
            groups: ParamGroup::ALL
                .iter()
                .map(|g| GroupShape {
                    name: g.name().to_string(),
                    shape: g.shape(),
                })
                .collect(),
            seed,
            step,
            position,
        }
    }
}

pub fn encode<T: Real>(params: &DenoiserParams<T>, header: &CheckpointHeader) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let width = if T::NAME == "f32" { 4 } else { 8 };
    let mut out = Vec::with_capacity(16 + json.len() + width * param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        if width == 4 {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

/// Decode a checkpoint of either precision into `T`.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<(DenoiserParams<T>, CheckpointHeader)> {
    let bad = |msg: &str| Error::invalid(format!("corrupt checkpoint: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let expected = CheckpointHeader::new::<T>(header.seed, header.step, None).groups;
    if header.groups != expected {
        return Err(bad("parameter shapes do not match the network"));
    }
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(bad(&format!("unknown dtype {other}"))),
    };
    let data = &bytes[16 + len..];
    if data.len() != width * param_count() {
        return Err(bad("parameter array has the wrong length"));
    }
    let values = data
        .chunks_exact(width)
        .map(|c| {
            T::from_f64(if width == 4 {
                f32::from_le_bytes(c.try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(c.try_into().unwrap())
            })
        })
        .collect();
    Ok((DenoiserParams::from_values(values)?, header))
}

pub fn save<T: Real>(
    path: &Path,
    params: &DenoiserParams<T>,
    header: &CheckpointHeader,
) -> Result<()> {
    fs::write(path, encode(params, header)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<(DenoiserParams<T>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
