//! "MVM1" mask files: magic `MVM1`, u32 LE width, u32 LE height, then
//! width*height bytes each 0 or 1, row-major.

use crate::{io_err, CliError, Result};
use hvt_core::labels::MaskRaster;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"MVM1";

pub fn encode(mask: &MaskRaster) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(12 + mask.data().len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(mask.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(mask.height() as u32).to_le_bytes());
    bytes.extend_from_slice(mask.data());
    bytes
}

pub fn decode(bytes: &[u8], origin: &str) -> Result<MaskRaster> {
    let fail = |msg: &str| CliError::Format(format!("{origin}: {msg}"));
    if bytes.len() < 12 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic, expected MVM1"));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != w * h {
        return Err(fail("payload length does not match dims"));
    }
    // MaskRaster::new re-validates the {0,1} constraint
    MaskRaster::new(w, h, body.to_vec()).map_err(CliError::Core)
}

pub fn write_mask(path: &Path, mask: &MaskRaster) -> Result<()> {
    fs::write(path, encode(mask)).map_err(|e| io_err(path, e))
}

pub fn read_mask(path: &Path) -> Result<MaskRaster> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes, &path.display().to_string())
}
