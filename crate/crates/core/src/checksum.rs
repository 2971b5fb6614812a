//! Content digests for tensors, used by the freeze audits.

use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;
use sha2::{Digest, Sha256};

/// sha256 over the tensor's shape and raw f64 little-endian payload, as hex.
/// Digests are over exact bits, so two tensors compare equal iff every
/// element is bit-identical.
pub fn tensor_digest(t: &Tensor) -> String {
    let mut h = Sha256::new();
    h.update((t.dims().len() as u32).to_le_bytes());
    for &d in t.dims() {
        h.update((d as u32).to_le_bytes());
    }
    for &x in t.data() {
        h.update(x.to_le_bytes());
    }
    hex(&h.finalize())
}

/// sha256 of arbitrary bytes, as hex.
pub fn bytes_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    const TABLE: &[u8; 16] = b"0123456789abcdef";
    let mut out = Vec::with_capacity(bytes.len() * 2);
    for &b in bytes {
        out.push(TABLE[(b >> 4) as usize]);
        out.push(TABLE[(b & 0x0f) as usize]);
    }
    String::from_utf8(out).unwrap()
}
