//! Named parameter storage and the `GWTS` weight file format.
//!
//! Layout (little-endian): magic `GWTS`, `u32` version = 1, `u32` tensor count,
//! then per tensor: `u16` name length, UTF-8 name, `u8` rank, `rank × u32` dims,
//! `f64` payload.

use std::io::{Read, Write};
use std::path::Path;

use super::graph::{Graph, ParamId, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"GWTS";
pub const WEIGHTS_VERSION: u32 = 1;

/// Ordered collection of named tensors. Insertion order is the [`ParamId`] order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn set(&mut self, id: ParamId, t: Tensor) -> Result<()> {
        if t.shape() != self.tensors[id.0].shape() {
            return Err(Error::Shape(format!(
                "replacing {} {:?} with {:?}",
                self.names[id.0],
                self.tensors[id.0].shape(),
                t.shape()
            )));
        }
        self.tensors[id.0] = t;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Binds every tensor into `g`, trainable or constant, in id order.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.ids()
            .map(|id| {
                let t = self.get(id).clone();
                if trainable {
                    g.param(id, t)
                } else {
                    g.constant(t)
                }
            })
            .collect()
    }

    /// Concatenates stores, prefixing each name with `"{prefix}."`.
    pub fn merged(parts: &[(&str, &ParamStore)]) -> ParamStore {
        let mut out = ParamStore::new();
        for (prefix, store) in parts {
            for (name, t) in store.iter() {
                out.push(format!("{prefix}.{name}"), t.clone());
            }
        }
        out
    }

    /// Sub-store of entries whose name starts with `"{prefix}."`, prefix stripped.
    pub fn extract(&self, prefix: &str) -> ParamStore {
        let p = format!("{prefix}.");
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(&p) {
                out.push(rest, t.clone());
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            let nb = name.as_bytes();
            let len = u16::try_from(nb.len()).map_err(|_| Error::Config(format!("tensor name too long: {name}")))?;
            buf.extend_from_slice(&len.to_le_bytes());
            buf.extend_from_slice(nb);
            let rank = u8::try_from(t.rank()).map_err(|_| Error::Config(format!("rank too large for {name}")))?;
            buf.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| Error::Config(format!("dim too large in {name}")))?;
                buf.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<ParamStore> {
        let mut r = bytes;
        let bad = |why: &str| Error::format(origin, why.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(bad("bad magic, expected GWTS"));
        }
        let version = read_u32(&mut r).ok_or_else(|| bad("truncated header"))?;
        if version != WEIGHTS_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r).ok_or_else(|| bad("truncated header"))?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2).map_err(|_| bad("truncated name length"))?;
            let nlen = u16::from_le_bytes(b2) as usize;
            if r.len() < nlen {
                return Err(bad("truncated name"));
            }
            let name = std::str::from_utf8(&r[..nlen])
                .map_err(|_| bad("name is not UTF-8"))?
                .to_string();
            r = &r[nlen..];
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).map_err(|_| bad("truncated rank"))?;
            let shape: Vec<usize> = (0..rank[0])
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| bad("truncated dims"))?;
            let n: usize = shape.iter().product();
            if r.len() < n * 8 {
                return Err(bad("truncated payload"));
            }
            let data = r[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            r = &r[n * 8..];
            let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
            store.push(name, t);
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<ParamStore> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ParamStore::from_bytes(&bytes, path)
    }
}

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

/// Writes via a sibling temporary file and rename; the temporary is removed on
/// failure so no partial file is left behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("tmp")
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
