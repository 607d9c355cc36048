//! IGRD binary raster format.
//!
//! 32-byte header: magic "IGRD", format version u16, unit code u16,
//! width u32, height u32, spacing f32 (metres), 12 reserved bytes.
//! Payload: little-endian f32 row-major, or u8 for gray rasters.

use crate::error::{Error, Result};
use crate::grid::{Raster, Unit};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"IGRD";
pub const VERSION: u16 = 1;

pub fn write<W: Write>(w: &mut W, raster: &Raster) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&raster.unit().code().to_le_bytes())?;
    w.write_all(&(raster.width() as u32).to_le_bytes())?;
    w.write_all(&(raster.height() as u32).to_le_bytes())?;
    w.write_all(&(raster.spacing_m() as f32).to_le_bytes())?;
    w.write_all(&[0u8; 12])?;
    if raster.unit() == Unit::GrayU8 {
        let bytes: Vec<u8> = raster.values().iter().map(|&v| v as u8).collect();
        w.write_all(&bytes)?;
    } else {
        for &v in raster.values() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read<R: Read>(r: &mut R) -> Result<Raster> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic, not an IGRD file".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported IGRD version {version}")));
    }
    let unit = Unit::from_code(u16::from_le_bytes([header[6], header[7]]))?;
    let width = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let spacing = f32::from_le_bytes(header[16..20].try_into().unwrap()) as f64;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
    let values = if unit == Unit::GrayU8 {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)?;
        buf.into_iter().map(|b| b as f64).collect()
    } else {
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        buf.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    Raster::new(width, height, spacing, unit, values)
}

pub fn write_file<P: AsRef<Path>>(path: P, raster: &Raster) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut f, raster)
}

pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Raster> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read(&mut f)
}
