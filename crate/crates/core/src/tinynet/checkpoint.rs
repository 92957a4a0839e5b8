//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "ACGM"  version:u32
//! config_len:u32  config:utf8[config_len]
//! repeated until EOF:
//!   name_len:u32  name:utf8[name_len]  rank:u32  dims:u32[rank]  data:f32[prod(dims)]
//! ```

use std::io::{Read, Write};

use super::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ACGM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    /// Echo of the run configuration that produced the tensors.
    pub config: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(config: impl Into<String>) -> Self {
        Self {
            config: config.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            dims,
            data,
        });
    }

    /// Appends every tensor of `store`, names prefixed with `prefix.`.
    pub fn add_store(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.iter() {
            self.push(
                format!("{prefix}.{}", p.name),
                p.shape.clone(),
                p.value.iter().map(|&v| v as f32).collect(),
            );
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Overwrites every tensor of `store` from `prefix.<name>` records.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        for p in store.iter_mut() {
            let key = format!("{prefix}.{}", p.name);
            let t = self
                .get(&key)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {key}")))?;
            if t.dims != p.shape {
                return Err(Error::Format(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    t.dims, p.shape
                )));
            }
            p.value
                .iter_mut()
                .zip(&t.data)
                .for_each(|(v, &x)| *v = x as f64);
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.config.len() as u32).to_le_bytes())?;
        w.write_all(self.config.as_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for &d in &t.dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not an ACGM checkpoint".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let clen = cur.u32()? as usize;
        let config = String::from_utf8(cur.take(clen)?.to_vec())
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        let mut tensors = Vec::new();
        while cur.pos < bytes.len() {
            let nlen = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = cur.u32()? as usize;
            let dims = (0..rank)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = cur.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        Ok(Self { config, tensors })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("reading checkpoint: {e}")))?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("truncated checkpoint".into())),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
