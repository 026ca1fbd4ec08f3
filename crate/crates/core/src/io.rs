//! Binary field (`TSF1`) and mask (`TSM1`) files.
//!
//! Layout: 4 magic bytes, little-endian `u32` dim, `u32` N, `f64` extent,
//! then the payload row-major: interleaved `(re, im)` f64 pairs for fields,
//! one f64 cell fraction per cell for masks.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};
use crate::thick::SupportMask;

pub const FIELD_MAGIC: &[u8; 4] = b"TSF1";
pub const MASK_MAGIC: &[u8; 4] = b"TSM1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

fn header(magic: &[u8; 4], grid: &Grid, payload: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points() as u32).to_le_bytes());
    out.extend_from_slice(&grid.extent().to_le_bytes());
    out
}

fn parse_header(bytes: &[u8], magic: &[u8; 4]) -> Result<Grid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[..4],
            std::str::from_utf8(magic).unwrap_or("?")
        )));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let extent = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    Grid::new(dim, extent, n)
}

fn read_f64s(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            count * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn encode_field(field: &SpectralField) -> Vec<u8> {
    let mut out = header(FIELD_MAGIC, field.grid(), field.values().len() * 16);
    for v in field.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<SpectralField> {
    let grid = parse_header(bytes, FIELD_MAGIC)?;
    let raw = read_f64s(&bytes[HEADER_LEN..], 2 * grid.len())?;
    let values = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    SpectralField::new(&grid, values)
}

pub fn encode_mask(mask: &SupportMask) -> Vec<u8> {
    let mut out = header(MASK_MAGIC, mask.grid(), mask.fractions().len() * 8);
    for v in mask.fractions() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<SupportMask> {
    let grid = parse_header(bytes, MASK_MAGIC)?;
    let fractions = read_f64s(&bytes[HEADER_LEN..], grid.len())?;
    SupportMask::from_fractions(&grid, fractions)
}

pub fn write_field(path: &Path, field: &SpectralField) -> Result<()> {
    std::fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<SpectralField> {
    decode_field(&std::fs::read(path)?)
}

pub fn write_mask(path: &Path, mask: &SupportMask) -> Result<()> {
    std::fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SupportMask> {
    decode_mask(&std::fs::read(path)?)
}
