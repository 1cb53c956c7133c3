//! Named f64 tensors in a little-endian binary file.
//!
//! Layout: magic `STNB`, `u32` tensor count, then per tensor a `u32` name
//! length, the UTF-8 name, a `u32` rank, `u64` dimensions and the row-major
//! `f64` data.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STNB";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name: name.into(), shape: shape.to_vec(), data }
    }
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
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

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<Tensor>> {
    let bad = |m: &str| Error::format("decoding tensors", path, m);
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("missing STNB header"));
    }
    let count = c.u32().ok_or_else(|| bad("truncated header"))?;
    let mut out = Vec::new();
    for _ in 0..count {
        let name_len = c.u32().ok_or_else(|| bad("truncated tensor name"))? as usize;
        let name = std::str::from_utf8(c.take(name_len).ok_or_else(|| bad("truncated tensor name"))?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_owned();
        let rank = c.u32().ok_or_else(|| bad("truncated shape"))? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u64().ok_or_else(|| bad("truncated shape"))? as usize);
        }
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflows"))?;
        let raw = c
            .take(len.checked_mul(8).ok_or_else(|| bad("shape overflows"))?)
            .ok_or_else(|| bad(&format!("tensor '{name}' is truncated")))?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        out.push(Tensor { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(out)
}

/// Looks tensors up by name, checking shapes.
pub struct TensorSet {
    pub tensors: Vec<Tensor>,
    pub path: PathBuf,
}

impl TensorSet {
    pub fn read(bytes: &[u8], path: &Path) -> Result<Self> {
        Ok(Self { tensors: decode(bytes, path)?, path: path.to_path_buf() })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("reading tensors", &self.path, format!("missing tensor '{name}'")))
    }

    pub fn get_shaped(&self, name: &str, rank: usize) -> Result<&Tensor> {
        let t = self.get(name)?;
        if t.shape.len() != rank {
            return Err(Error::format(
                "reading tensors",
                &self.path,
                format!("tensor '{name}' has rank {} instead of {rank}", t.shape.len()),
            ));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let ts = vec![
            Tensor::new("a", &[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]),
            Tensor::new("empty", &[0], vec![]),
        ];
        let back = decode(&encode(&ts), Path::new("x")).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in ts[0].data.iter().zip(&back[0].data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back[1].shape, vec![0]);
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode(&[Tensor::new("a", &[3], vec![1.0, 2.0, 3.0])]);
        for cut in [0, 3, 9, bytes.len() - 1] {
            assert!(decode(&bytes[..cut], Path::new("x")).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra, Path::new("x")).is_err());
    }
}
