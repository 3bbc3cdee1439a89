//! Flat binary tensor archive.
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"CARTNSR1"
//! 8       8     manifest length N, u64 little-endian
//! 16      N     manifest, UTF-8 JSON: {"version": 1, "tensors": [{"name", "shape", "offset", "len"}]}
//! 16+N    ...   payload, f64 little-endian; `offset`/`len` count elements from payload start
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CARTNSR1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<TensorEntry>,
    data: Vec<f64>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[f64]) -> Result<()> {
        let name = name.into();
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::Structural(format!(
                "tensor `{name}` has shape {shape:?} but {} values",
                values.len()
            )));
        }
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Structural(format!("duplicate tensor `{name}`")));
        }
        self.entries.push(TensorEntry {
            name,
            shape,
            offset: self.data.len(),
            len,
        });
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| (e.shape.as_slice(), &self.data[e.offset..e.offset + e.len]))
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.get(name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// All tensors whose names start with `prefix.`, concatenated in archive order.
    pub fn concat_prefix(&self, prefix: &str) -> Vec<f64> {
        let dotted = format!("{prefix}.");
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(&dotted))
            .flat_map(|e| self.data[e.offset..e.offset + e.len].iter().copied())
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = serde_json::to_vec(&Manifest {
            version: FORMAT_VERSION,
            tensors: self.entries.clone(),
        })?;
        let mut buf = Vec::with_capacity(16 + manifest.len() + 8 * self.data.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        buf.extend_from_slice(&manifest);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
            .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |why: &str| Error::Checkpoint(format!("corrupt tensor archive: {why}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let manifest_end = 16usize.checked_add(n).ok_or_else(|| corrupt("manifest length"))?;
        if bytes.len() < manifest_end {
            return Err(corrupt("truncated manifest"));
        }
        let manifest: Manifest =
            serde_json::from_slice(&bytes[16..manifest_end]).map_err(|e| corrupt(&e.to_string()))?;
        if manifest.version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported version {}", manifest.version)));
        }
        let payload = &bytes[manifest_end..];
        if payload.len() % 8 != 0 {
            return Err(corrupt("payload is not a whole number of f64 values"));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for e in &manifest.tensors {
            if e.shape.iter().product::<usize>() != e.len || e.offset + e.len > data.len() {
                return Err(corrupt(&format!("tensor `{}` out of bounds", e.name)));
            }
        }
        Ok(Self {
            entries: manifest.tensors,
            data,
        })
    }
}
