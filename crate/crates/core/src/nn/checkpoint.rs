//! `NNCK` container: magic, `u32` version, `u32` manifest length, manifest
//! JSON, then raw little-endian `f32` tensors in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Named `f32` tensors plus free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: String, t: Tensor<f32>) {
        self.tensors.push((name, t));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> &[(String, Tensor<f32>)] {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut buf = Vec::with_capacity(12 + json.len() + 4 * self.tensors.iter().map(|(_, t)| t.len()).sum::<usize>());
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let trunc = |need: usize| Error::Decode {
            offset: bytes.len(),
            reason: format!("truncated checkpoint, need {need} bytes"),
        };
        if bytes.len() < 12 {
            return Err(trunc(12));
        }
        if bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Decode {
                offset: 0,
                reason: "bad checkpoint magic".into(),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Decode {
                offset: 4,
                reason: format!("unsupported checkpoint version {version}"),
            });
        }
        let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes.get(12..12 + mlen).ok_or_else(|| trunc(12 + mlen))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| Error::Decode {
            offset: 12,
            reason: format!("bad manifest: {e}"),
        })?;
        let mut off = 12 + mlen;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let raw = bytes.get(off..off + 4 * n).ok_or_else(|| trunc(off + 4 * n))?;
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push((e.name, Tensor::new(&e.shape, data)?));
            off += 4 * n;
        }
        if off != bytes.len() {
            return Err(Error::Decode {
                offset: off,
                reason: "trailing bytes after tensors".into(),
            });
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut ck = Checkpoint::new(serde_json::json!({"k": 1}));
        ck.push("w".into(), Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let b = ck.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), ck);
        assert!(matches!(Checkpoint::from_bytes(&b[..b.len() - 1]), Err(Error::Decode { .. })));
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("net.w".into(), Tensor::zeros(&[2, 2]));
        let mut ps = ParamSet::<f32>::new();
        ps.add("w", Tensor::zeros(&[3, 2])).unwrap();
        match ps.load_from(&ck, "net.") {
            Err(Error::ShapeMismatch { name, .. }) => assert_eq!(name, "net.w"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
