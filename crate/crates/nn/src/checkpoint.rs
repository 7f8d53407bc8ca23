//! Versioned binary checkpoint container.
//!
//! Layout: the 8-byte magic `INITCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the UTF-8 JSON header, then
//! every parameter array as little-endian IEEE-754 `f64` in header order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NnError, Result};
use crate::param::Module;

pub const MAGIC: &[u8; 8] = b"INITCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f64` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    /// What the parameters belong to, e.g. `"decoder"` or `"bridge"`.
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized, C: Serialize>(
        kind: &str,
        config: &C,
        seed: u64,
        metadata: BTreeMap<String, serde_json::Value>,
        module: &M,
    ) -> Result<Self> {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        module.visit(&mut |p| {
            tensors.push(TensorEntry {
                name: p.name().to_string(),
                shape: p.shape().to_vec(),
                offset: data.len(),
            });
            data.extend_from_slice(&p.value);
        });
        Ok(Self {
            header: CheckpointHeader {
                kind: kind.to_string(),
                config: serde_json::to_value(config)?,
                seed,
                metadata,
                tensors,
            },
            data,
        })
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.header.config.clone())?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(NnError::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.header.kind
            )));
        }
        Ok(())
    }

    /// Copies stored values into `module`, which must have exactly the same
    /// parameter names and shapes in the same order.
    pub fn restore_into<M: Module + ?Sized>(&self, module: &mut M) -> Result<()> {
        let mut err = None;
        let mut idx = 0;
        let tensors = &self.header.tensors;
        let data = &self.data;
        module.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            let Some(t) = tensors.get(idx) else {
                err = Some(format!("checkpoint is missing parameter `{}`", p.name()));
                return;
            };
            idx += 1;
            if t.name != p.name() || t.shape != p.shape() {
                err = Some(format!(
                    "parameter mismatch: checkpoint has `{}` {:?}, model expects `{}` {:?}",
                    t.name,
                    t.shape,
                    p.name(),
                    p.shape()
                ));
                return;
            }
            let n = p.len();
            p.value.copy_from_slice(&data[t.offset..t.offset + n]);
        });
        if let Some(e) = err {
            return Err(NnError::Checkpoint(e));
        }
        if idx != tensors.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint holds {} tensors, model has {idx}",
                tensors.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| NnError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
        let payload = &body[hlen..];
        if payload.len() % 8 != 0 {
            return Err(bad("payload is not a whole number of f64 values"));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut expected = 0;
        for t in &header.tensors {
            let n: usize = t.shape.iter().product();
            if t.offset != expected {
                return Err(NnError::Checkpoint(format!(
                    "tensor `{}` has offset {} but {expected} was expected",
                    t.name, t.offset
                )));
            }
            expected += n;
        }
        if expected != data.len() {
            return Err(NnError::Checkpoint(format!(
                "payload holds {} values, header describes {expected}",
                data.len()
            )));
        }
        Ok(Self { header, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized bytes, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

/// SHA-256 of a file on disk, hex encoded.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
