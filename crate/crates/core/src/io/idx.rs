//! Big-endian IDX files (the MNIST distribution format).

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("IDX header truncated".into()))
}

fn check_magic(bytes: &[u8], expect: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expect {
        return Err(Error::Format(format!("IDX magic {magic:#010x}, expected {expect:#010x}")));
    }
    Ok(())
}

/// Images as rows (flattened row-major), scaled to `[0, 1]`.
pub fn parse_idx(bytes: &[u8]) -> Result<DMatrix<f64>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let pixels = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let data = &bytes[16..];
    if data.len() != count * pixels {
        return Err(Error::Format(format!(
            "IDX body has {} bytes, expected {count}x{pixels}",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(count, pixels, data.iter().map(|&b| b as f64 / 255.0)))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let data = &bytes[8..];
    if data.len() != count {
        return Err(Error::Format(format!("IDX label body has {} bytes, expected {count}", data.len())));
    }
    Ok(data.to_vec())
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_idx(&std::fs::read(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&std::fs::read(path)?)
}
