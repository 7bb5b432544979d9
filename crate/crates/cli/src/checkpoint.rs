//! Named-tensor checkpoints.
//!
//! Layout: `NASACKPT`, `u32` version, `u32` tensor count, then per tensor a
//! `u32` name length, the UTF-8 name, a `u32` rank, `u64` dims and the
//! `f64` little-endian payload. Every tensor stored here is rank 2.

use std::path::Path;

use nasa_core::linalg::Matrix;

use crate::error::{FormatError, Result};
use crate::io::{read_file, write_file, Reader};

pub const MAGIC: &[u8; 8] = b"NASACKPT";
pub const VERSION: u32 = 1;

pub fn encode(tensors: &[(String, Matrix)]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        b.extend_from_slice(&(name.len() as u32).to_le_bytes());
        b.extend_from_slice(name.as_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        b.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader::new(path, bytes);
    if r.take(8)? != MAGIC {
        return Err(FormatError::parse(path, "not a checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::parse(path, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::parse(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims[..] {
            [] => (1, 1),
            [c] => (1, c),
            [rows, cols] => (rows, cols),
            _ => return Err(FormatError::parse(path, format!("{name}: rank {rank} is not supported"))),
        };
        let n = rows.checked_mul(cols).ok_or_else(|| FormatError::parse(path, format!("{name}: dims overflow")))?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        out.push((name, Matrix::new(rows, cols, data)?));
    }
    r.finish()?;
    Ok(out)
}

pub fn save(tensors: &[(String, Matrix)], path: &Path) -> Result<()> {
    write_file(path, &encode(tensors))
}

pub fn load(path: &Path) -> Result<Vec<(String, Matrix)>> {
    decode(path, &read_file(path)?)
}
