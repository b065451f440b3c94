//! Single-file archive of named `f64` tensors plus a JSON metadata record.
//!
//! Layout (little endian): the 8-byte magic `CLGNARCH`, a `u32` version,
//! a `u64`-prefixed JSON metadata blob, a `u64` tensor count, then for each
//! tensor a `u32`-prefixed UTF-8 name, a `u32` rank, `u64` dimensions and
//! the raw `f64` values.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::layers::Parameterized;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CLGNARCH";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Archive {
    pub metadata: serde_json::Value,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Archive {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        let name = name.into();
        let t = Tensor {
            name: name.clone(),
            shape,
            data,
        };
        match self.index.get(&name) {
            Some(&i) => self.tensors[i] = t,
            None => {
                self.index.insert(name, self.tensors.len());
                self.tensors.push(t);
            }
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` missing from archive")))
    }

    /// Stores every parameter and buffer of `module` under `prefix`.
    pub fn store_module(&mut self, prefix: &str, module: &impl Parameterized) {
        for (name, p) in module.named_params() {
            self.insert(format!("{prefix}.{name}"), p.shape.clone(), p.value.clone());
        }
    }

    /// Restores `module` from tensors under `prefix`. Every parameter must be
    /// present with exactly the same shape.
    pub fn load_module(&self, prefix: &str, module: &mut impl Parameterized) -> Result<()> {
        for (name, p) in module.named_params_mut() {
            let key = format!("{prefix}.{name}");
            let t = self.tensor(&key)?;
            if t.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "`{key}` has shape {:?}, network expects {:?}",
                    t.shape, p.shape
                )));
            }
            p.value.copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("json value serialises");
        let mut out = Vec::with_capacity(
            64 + meta.len()
                + self
                    .tensors
                    .iter()
                    .map(|t| t.data.len() * 8 + t.name.len() + 64)
                    .sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported archive version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let metadata =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let count = r.u64()? as usize;
        let mut archive = Archive::new(metadata);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("`{name}` shape overflows")))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            archive.insert(name, shape, data);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(archive)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("archive is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
