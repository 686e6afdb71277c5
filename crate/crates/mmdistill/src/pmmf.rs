//! The `PMMF` matrix container: the magic bytes `PMMF`, `u32` rows and
//! columns, then `rows · cols` `f32` values in row-major order, all
//! little-endian.

use std::path::Path;

use mmdistill_core::numerics::DenseMatrix;

use crate::error::{IoError, IoResult};

pub const MAGIC: &[u8; 4] = b"PMMF";
const HEADER: usize = 12;

pub fn encode(m: &DenseMatrix) -> IoResult<Vec<u8>> {
    let (rows, cols) = m.shape();
    let too_big = |n: usize| u32::try_from(n).is_err();
    if too_big(rows) || too_big(cols) {
        return Err(IoError::format("<matrix>", format!("{rows}x{cols} does not fit a u32 header")));
    }
    let mut out = Vec::with_capacity(HEADER + 4 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in m.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(IoError::format("<matrix>", format!("value {v} is not representable as a finite f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> IoResult<DenseMatrix> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(IoError::format(path, "missing PMMF magic"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(4), word(8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::format(path, format!("header {rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER..];
    if payload.len() < expected {
        return Err(IoError::format(
            path,
            format!("truncated: header says {rows}x{cols} ({expected} bytes), found {} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(IoError::format(path, format!("{} trailing bytes after {rows}x{cols} payload", payload.len() - expected)));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(IoError::format(path, format!("non-finite value at row {}, col {}", k / cols, k % cols)));
        }
        data.push(f64::from(v));
    }
    Ok(DenseMatrix::new(rows, cols, data)?)
}

pub fn save_features(path: &Path, m: &DenseMatrix) -> IoResult<()> {
    let bytes = encode(m).map_err(|e| match e {
        IoError::Format { message, .. } => IoError::format(path, message),
        other => other,
    })?;
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn load_features(path: &Path) -> IoResult<DenseMatrix> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes, path)
}
