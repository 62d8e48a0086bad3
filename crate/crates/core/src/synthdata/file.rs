//! Little-endian dataset file:
//!
//! ```text
//! "FRMD" | u32 version = 1 | u32 sample_count
//! per sample: u16 H | u16 W | u16 map_id
//!             f32 building[H*W] | f32 tx_raster[H*W] | f32 target[H*W]
//!             f32 tx_row | f32 tx_col | f32 meters_per_cell
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::RadioSample;

pub const DATASET_MAGIC: &[u8; 4] = b"FRMD";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(mut w: W, samples: &[RadioSample]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    let count = u32::try_from(samples.len()).map_err(|_| Error::Format("too many samples".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for s in samples {
        let dims = |v: usize| u16::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u16")));
        w.write_all(&dims(s.height)?.to_le_bytes())?;
        w.write_all(&dims(s.width)?.to_le_bytes())?;
        w.write_all(&s.map_id.to_le_bytes())?;
        for grid in [&s.building, &s.tx_raster, &s.target] {
            if grid.len() != s.height * s.width {
                return Err(Error::Format("grid length disagrees with H*W".into()));
            }
            for v in grid.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&(s.tx_row as f32).to_le_bytes())?;
        w.write_all(&(s.tx_col as f32).to_le_bytes())?;
        w.write_all(&s.meters_per_cell.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated dataset: {e}")))?;
    Ok(b)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(read_array(r)?))).collect()
}

fn as_index(v: f32, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 65536.0 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("{what} {v} is not a cell index")))
    }
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<RadioSample>> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let height = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let width = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let map_id = u16::from_le_bytes(read_array(&mut r)?);
        let n = height * width;
        let building = read_f32s(&mut r, n)?;
        let tx_raster = read_f32s(&mut r, n)?;
        let target = read_f32s(&mut r, n)?;
        let tx_row = as_index(f32::from_le_bytes(read_array(&mut r)?), "tx_row")?;
        let tx_col = as_index(f32::from_le_bytes(read_array(&mut r)?), "tx_col")?;
        let meters_per_cell = f32::from_le_bytes(read_array(&mut r)?);
        out.push(RadioSample {
            map_id,
            height,
            width,
            building,
            tx_raster,
            target,
            tx_row,
            tx_col,
            meters_per_cell,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last sample".into()));
    }
    Ok(out)
}

pub fn write_dataset_file(path: &Path, samples: &[RadioSample]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), samples)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<RadioSample>> {
    read_dataset(BufReader::new(File::open(path)?))
}
