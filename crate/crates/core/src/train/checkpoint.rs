//! Binary checkpoint container.
//!
//! ```text
//! "LDNW"  u32 version  u32 count
//! count × { u16 name_len  name  u8 rank  rank × u32 dim  values }
//! u64 rng  u32 epoch
//! ```
//! All integers and values little-endian. Version 1 stores 32-bit floats, version 2 stores
//! 64-bit floats.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LDNW";
pub const VERSION_F32: u32 = 1;
pub const VERSION_F64: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
    pub rng: u64,
    pub epoch: u32,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file: {what} needs {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let width = match self.version {
            VERSION_F32 => 4,
            VERSION_F64 => 8,
            v => return Err(Error::Checkpoint(format!("unsupported version {v}"))),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len())
                .map_err(|_| Error::Checkpoint(format!("tensor name `{}` too long", t.name)))?;
            if t.shape.iter().product::<usize>() != t.values.len() || t.shape.len() > 255 {
                return Err(Error::Checkpoint(format!("tensor `{}` has inconsistent shape", t.name)));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.reserve(t.values.len() * width);
            for &v in &t.values {
                if width == 4 {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                } else {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&self.rng.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a LadderNet checkpoint".into()));
        }
        let version = u32::from_le_bytes(c.array("version")?);
        let width = match version {
            VERSION_F32 => 4,
            VERSION_F64 => 8,
            v => return Err(Error::Checkpoint(format!("version mismatch: file has {v}, expected {VERSION_F32} or {VERSION_F64}"))),
        };
        let count = u32::from_le_bytes(c.array("tensor count")?);
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(c.array("name length")?) as usize;
            let name = String::from_utf8(c.take(len, "name")?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = c.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(c.array("dimension")?) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = c.take(n * width, &format!("values of `{name}`"))?;
            let values = if width == 4 {
                raw.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap()))).collect()
            } else {
                raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()
            };
            tensors.push(NamedTensor { name, shape, values });
        }
        let rng = u64::from_le_bytes(c.array("rng state")?);
        let epoch = u32::from_le_bytes(c.array("epoch")?);
        if c.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
        }
        Ok(Self { version, tensors, rng, epoch })
    }

    /// Written to a temporary file first, so an interrupted save keeps the old file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
