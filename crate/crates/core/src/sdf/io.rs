//! Binary grid file format ("SDFG").
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "SDFG"
//! version u16      currently 1
//! dims    3 x u32  nx, ny, nz
//! origin  3 x f64  world position of voxel (0,0,0)'s center
//! spacing f64
//! values  nx*ny*nz x f32, x-fastest, then y, then z
//! ```
//!
//! Values quantize to f32 on write; a grid loaded from disk writes back
//! byte-identically.

use crate::error::{Error, Result};
use crate::sdf::SdfGrid;
use crate::Vec3;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub(crate) const SDFG_MAGIC: &[u8; 4] = b"SDFG";
pub(crate) const SDFG_VERSION: u16 = 1;

/// Writes a grid to an SDFG file.
pub fn write_sdfg(grid: &SdfGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(SDFG_MAGIC).map_err(werr)?;
    w.write_all(&SDFG_VERSION.to_le_bytes()).map_err(werr)?;
    let (nx, ny, nz) = grid.dims();
    for n in [nx, ny, nz] {
        w.write_all(&(n as u32).to_le_bytes()).map_err(werr)?;
    }
    for c in 0..3 {
        w.write_all(&grid.origin()[c].to_le_bytes()).map_err(werr)?;
    }
    w.write_all(&grid.spacing().to_le_bytes()).map_err(werr)?;
    for v in grid.values() {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

/// Reads a grid from an SDFG file.
pub fn read_sdfg(path: &Path) -> Result<SdfGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_all(&mut r, &mut magic, path)?;
    if &magic != SDFG_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r, path)?;
    if version != SDFG_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let nx = read_u32(&mut r, path)? as usize;
    let ny = read_u32(&mut r, path)? as usize;
    let nz = read_u32(&mut r, path)? as usize;
    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .filter(|v| *v > 0 && *v <= (1usize << 31))
        .ok_or_else(|| Error::format(path, format!("bad dims {nx}x{ny}x{nz}")))?;
    let origin = Vec3::new(
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
    );
    let spacing = read_f64(&mut r, path)?;
    let values = read_f32_values(&mut r, count, path)?;
    let grid = SdfGrid::new((nx, ny, nz), origin, spacing, values).map_err(|e| {
        Error::format(path, format!("invalid grid: {e}"))
    })?;
    expect_eof(&mut r, path)?;
    Ok(grid)
}

// --- shared little-endian read helpers (also used by the other formats) ---

pub(crate) fn read_all(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(path, "file truncated")
        } else {
            Error::io(path, e)
        }
    })
}

pub(crate) fn read_u16(r: &mut impl Read, path: &Path) -> Result<u16> {
    let mut b = [0u8; 2];
    read_all(r, &mut b, path)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_all(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_all(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads `count` f32 values into f64s.
pub(crate) fn read_f32_values(r: &mut impl Read, count: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 4];
    read_all(r, &mut bytes, path)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Errors if any bytes remain.
pub(crate) fn expect_eof(r: &mut impl Read, path: &Path) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::format(path, "trailing bytes after values")),
        Err(e) => Err(Error::io(path, e)),
    }
}
