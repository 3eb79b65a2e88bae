//! Binary checkpoint: versioned header, the run configuration as JSON, then
//! named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes   "HGNCKPT\0"
//! version  u32       1
//! dtype    u32 len + ASCII ("f64" | "f32")
//! config   u32 len + UTF-8 JSON
//! count    u32
//! tensor   u32 name len + UTF-8 name, u32 ndim, ndim × u64 dims,
//!          prod(dims) values in dtype width
//! ```

use std::path::Path;

use crate::error::{write_file, Error, Result};
use crate::params::ParameterStore;
use crate::tensor::Real;

pub const MAGIC: &[u8; 8] = b"HGNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dtype: String,
    pub config: String,
    pub tensors: Vec<NamedTensor>,
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&u32::try_from(x).expect("length fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes every parameter of `store` in registration order.
pub fn encode<T: Real>(store: &ParameterStore<T>, config_json: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.numel() * std::mem::size_of::<T>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, T::DTYPE);
    put_str(&mut out, config_json);
    put_u32(&mut out, store.len());
    for p in store.iter() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.shape().len());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            match T::DTYPE {
                "f32" => out.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes()),
                _ => out.extend_from_slice(&x.to_f64_lossy().to_le_bytes()),
            }
        }
    }
    out
}

pub fn save<T: Real>(path: &Path, store: &ParameterStore<T>, config_json: &str) -> Result<()> {
    write_file(path, encode(store, config_json))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version as u32 != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = r.string("dtype")?;
    let width = match dtype.as_str() {
        "f64" => 8,
        "f32" => 4,
        other => return Err(Error::Checkpoint(format!("unknown dtype {other:?}"))),
    };
    let config = r.string("config")?;
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let ndim = r.u32("ndim")?;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Checkpoint(format!("{name}: bad rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut numel: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(r.u64("dim")?)
                .map_err(|_| Error::Checkpoint(format!("{name}: dim overflow")))?;
            if d == 0 {
                return Err(Error::Checkpoint(format!("{name}: zero dim")));
            }
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
            shape.push(d);
        }
        let nbytes = numel
            .checked_mul(width)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
        let raw = r.take(nbytes, "tensor data")?;
        let data: Vec<f64> = match width {
            8 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            _ => raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect(),
        };
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint(format!("{name}: non-finite value")));
        }
        tensors.push(NamedTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        dtype,
        config,
        tensors,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

impl Checkpoint {
    /// Copies every stored tensor into `store`; the name sets must match exactly.
    pub fn restore<T: Real>(&self, store: &mut ParameterStore<T>) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for t in &self.tensors {
            let data = t.data.iter().map(|&x| T::from_f64_lossy(x)).collect();
            store.assign(&t.name, &t.shape, data)?;
        }
        Ok(())
    }
}
