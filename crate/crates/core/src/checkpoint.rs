//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, header length as little-endian `u64`, a JSON
//! header, then every tensor as little-endian `f64`s at the offset recorded
//! in the header manifest (relative to the start of the payload).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"EXPRMOL\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vae,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: ModelKind,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint: model kind, model-specific metadata and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub meta: serde_json::Value,
    pub params: ParamStore,
}

fn bad(msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CoreError> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0u64;
        for (name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 8 * t.len() as u64;
        }
        let header = Header {
            version: FORMAT_VERSION,
            kind: self.kind,
            meta: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let hend = 16u64
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| bad("header length exceeds file size"))? as usize;
        let value: serde_json::Value =
            serde_json::from_slice(&bytes[16..hend]).map_err(|e| bad(format!("header: {e}")))?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(bad(format!(
                "unsupported format version {}, this build reads version {FORMAT_VERSION}",
                version.map_or("?".to_string(), |v| v.to_string())
            )));
        }
        let header: Header = serde_json::from_value(value).map_err(|e| bad(format!("header: {e}")))?;
        let payload = &bytes[hend..];
        let mut params = ParamStore::new();
        let mut expected = 0u64;
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if entry.offset != expected {
                return Err(bad(format!("tensor {} at offset {}, expected {expected}", entry.name, entry.offset)));
            }
            let end = entry.offset + 8 * n as u64;
            if end > payload.len() as u64 {
                return Err(bad(format!("tensor {} runs past the end of the file", entry.name)));
            }
            let data = payload[entry.offset as usize..end as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(entry.shape.clone(), data).map_err(|e| bad(format!("tensor {}: {e}", entry.name)))?;
            params.push(entry.name.clone(), t);
            expected = end;
        }
        if expected != payload.len() as u64 {
            return Err(bad(format!("{} trailing bytes after the last tensor", payload.len() as u64 - expected)));
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        fs::write(path, self.to_bytes()?).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CoreError::Checkpoint(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<(), CoreError> {
        if self.kind != kind {
            return Err(bad(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    /// Checks that the parameter names and shapes equal `expected`'s.
    pub fn expect_layout(&self, expected: &ParamStore) -> Result<(), CoreError> {
        if self.params.len() != expected.len() {
            return Err(bad(format!("{} tensors, expected {}", self.params.len(), expected.len())));
        }
        for ((n1, t1), (n2, t2)) in self.params.iter().zip(expected.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(bad(format!("tensor {n1}{:?} does not match expected {n2}{:?}", t1.shape(), t2.shape())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.push("w", Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        params.push("b", Tensor::row(vec![0.1, 0.2, 0.3]));
        Checkpoint {
            kind: ModelKind::Vae,
            meta: json!({"genes": ["a", "b"], "lr": 1e-4}),
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta, c.meta);
        for ((_, a), (_, b)) in back.params.iter().zip(c.params.iter()) {
            let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_damage_and_unknown_versions() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(Checkpoint::from_bytes(b"garbage!garbage!").is_err());

        let key = b"\"version\":1";
        let pos = bytes.windows(key.len()).position(|w| w == key).unwrap();
        let mut v2 = bytes.clone();
        v2[pos + 10] = b'7';
        let e = Checkpoint::from_bytes(&v2).unwrap_err();
        assert!(e.to_string().contains("unsupported format version 7"), "{e}");
    }

    #[test]
    fn kind_and_layout_checks() {
        let c = sample();
        assert!(c.expect_kind(ModelKind::Vae).is_ok());
        assert!(c.expect_kind(ModelKind::Generator).is_err());
        assert!(c.expect_layout(&c.params).is_ok());
        let mut other = ParamStore::new();
        other.push("w", Tensor::zeros(&[2, 2]));
        other.push("b", Tensor::zeros(&[1, 4]));
        assert!(c.expect_layout(&other).is_err());
    }
}
