//! Binary embedding store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "ZOSDEMB1"
//! count   u32
//! dim     u32
//! count x { key_len u32, key [u8; key_len] (UTF-8), values [f32 LE; dim] }
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::vector::{EmbeddingVector, NORM_TOLERANCE};

pub const MAGIC: &[u8; 8] = b"ZOSDEMB1";

/// Keyed unit vectors of one shared dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: IndexMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: EmbeddingVector) -> Result<()> {
        let key = key.into();
        if vector.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        check_norm(&key, &vector)?;
        if self.vectors.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.vectors.len())
            .map_err(|_| Error::InvalidConfig("too many vectors for a u32 count".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::InvalidConfig("dimension does not fit in u32".into()))?;
        let record_bytes: usize = self.vectors.keys().map(|k| 4 + k.len() + 4 * self.dim).sum();
        let mut out = Vec::with_capacity(16 + record_bytes);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        for (key, vector) in &self.vectors {
            let key_len = u32::try_from(key.len())
                .map_err(|_| Error::InvalidConfig(format!("key too long: {} bytes", key.len())))?;
            out.extend_from_slice(&key_len.to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        let magic = reader.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic(String::from_utf8_lossy(magic).into_owned()));
        }
        let count = reader.u32("count")? as usize;
        let dim = reader.u32("dim")? as usize;
        let mut store = Self::new(dim);
        for i in 0..count {
            let key_len = reader.u32(&format!("record {i} key length"))? as usize;
            let key = std::str::from_utf8(reader.take(key_len, &format!("record {i} key"))?)
                .map_err(|_| Error::InvalidUtf8)?
                .to_owned();
            let raw = reader.take(4 * dim, &format!("record {i} values"))?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let vector = EmbeddingVector::from_unit(values).map_err(|e| match e {
                Error::NormViolation { norm, .. } => Error::NormViolation { key: key.clone(), norm },
                other => other,
            })?;
            store.insert(key, vector)?;
        }
        if reader.pos != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - reader.pos));
        }
        Ok(store)
    }
}

fn check_norm(key: &str, vector: &EmbeddingVector) -> Result<()> {
    let norm = vector.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NormViolation {
            key: key.to_owned(),
            norm,
        });
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::TruncatedFile(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

pub fn write_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = store.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
