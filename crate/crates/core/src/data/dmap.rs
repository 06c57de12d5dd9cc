//! `DMAP` files: magic, `u32` height, width and stride, then f32 values,
//! all little-endian, row-major. Masks are stored as 0.0 / 1.0.

use std::path::Path;

use crate::density::{AttentionMask, DensityMap};
use crate::error::{Error, Result};

pub const DMAP_MAGIC: &[u8; 4] = b"DMAP";

pub fn encode_dmap(width: usize, height: usize, stride: usize, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + width * height * 4);
    out.extend_from_slice(DMAP_MAGIC);
    for v in [height, width, stride] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_dmap(bytes: &[u8], path: &Path) -> Result<DensityMap> {
    if bytes.len() < 16 || &bytes[..4] != DMAP_MAGIC {
        return Err(Error::Version(format!("{}: not a DMAP file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (height, width, stride) = (word(4), word(8), word(12));
    let n = width * height;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::Validation(format!(
            "{}: {width}x{height} map needs {} bytes, file has {}",
            path.display(),
            16 + 4 * n,
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(DensityMap {
        width,
        height,
        stride,
        values,
    })
}

pub fn write_density(map: &DensityMap, path: &Path) -> Result<()> {
    let bytes = encode_dmap(map.width, map.height, map.stride, map.values.iter().copied());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_density(path: &Path) -> Result<DensityMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dmap(&bytes, path)
}

pub fn write_mask(mask: &AttentionMask, path: &Path) -> Result<()> {
    let vals = mask.values.iter().map(|&b| if b { 1.0 } else { 0.0 });
    std::fs::write(path, encode_dmap(mask.width, mask.height, mask.stride, vals)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<AttentionMask> {
    let m = read_density(path)?;
    let mut values = Vec::with_capacity(m.values.len());
    for v in &m.values {
        match *v {
            x if x == 0.0 => values.push(false),
            x if x == 1.0 => values.push(true),
            x => return Err(Error::Validation(format!("{}: mask value {x} is not 0 or 1", path.display()))),
        }
    }
    Ok(AttentionMask {
        width: m.width,
        height: m.height,
        stride: m.stride,
        values,
    })
}
