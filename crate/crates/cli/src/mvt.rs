//! "MVT1" tensor files: magic `MVT1`, u32 LE ndim, ndim u32 LE dims, then
//! the payload as f32 little-endian (converted from f64 on write). Readers
//! reject NaN and infinite payload values.

use crate::{io_err, CliError, Result};
use hvt_core::Tensor;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"MVT1";

pub fn encode(dims: &[usize], data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + dims.len() * 4 + data.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

/// Parse an MVT1 byte stream into dims and an f64 payload.
pub fn decode(bytes: &[u8], origin: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let fail = |msg: &str| CliError::Format(format!("{origin}: {msg}"));
    if bytes.len() < 8 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic, expected MVT1"));
    }
    let ndim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = 8 + ndim * 4;
    if bytes.len() < header {
        return Err(fail("truncated dims"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut count = 1usize;
    for i in 0..ndim {
        let at = 8 + i * 4;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        count = count
            .checked_mul(d)
            .ok_or_else(|| fail("dim product overflow"))?;
        dims.push(d);
    }
    let body = &bytes[header..];
    if body.len() != count * 4 {
        return Err(fail("payload length does not match dims"));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in body.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(fail("non-finite payload value"));
        }
        data.push(v as f64);
    }
    Ok((dims, data))
}

pub fn write_raw(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    fs::write(path, encode(dims, data)).map_err(|e| io_err(path, e))
}

pub fn read_raw(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_raw(path, t.dims(), t.data())
}

/// Read a rank-2 tensor; anything else is a format error here because the
/// in-memory Tensor type is matrix-shaped.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let (dims, data) = read_raw(path)?;
    if dims.len() != 2 {
        return Err(CliError::Format(format!(
            "{}: expected a rank-2 tensor, got rank {}",
            path.display(),
            dims.len()
        )));
    }
    Tensor::from_vec_checked(dims, data).map_err(CliError::Core)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_within_f32_precision() {
        let t = Tensor::from_vec(vec![2, 3], vec![0.5, -1.25, 3.0, 0.0, 2.5, -8.0]).unwrap();
        let bytes = encode(t.dims(), t.data());
        let (dims, data) = decode(&bytes, "mem").unwrap();
        assert_eq!(dims, vec![2, 3]);
        // these values are all exactly representable in f32
        assert_eq!(data, t.data());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = encode(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, "mem").is_err());
        assert!(decode(&bytes[..bytes.len() - 1], "mem").is_err());
        assert!(decode(&bytes[..6], "mem").is_err());
    }

    #[test]
    fn rejects_non_finite_payload() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode(&bytes, "mem").is_err());
        let inf = bytes.len() - 4;
        bytes[inf..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(decode(&bytes, "mem").is_err());
    }

    #[test]
    fn payload_is_f32_little_endian() {
        let bytes = encode(&[1, 1], &[1.0]);
        assert_eq!(&bytes[0..4], b"MVT1");
        assert_eq!(bytes[4..8], 2u32.to_le_bytes());
        assert_eq!(bytes[16..20], 1.0f32.to_le_bytes());
    }
}
