//! Per-clip feature cache: little-endian `u32 frames, u32 bands`, then
//! `frames * bands` `f32` values in time-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::LogmelSpectrogram;
use crate::error::{Error, IoContext, Result};

pub fn write_feature_cache(path: &Path, x: &LogmelSpectrogram) -> Result<()> {
    let file = File::create(path).ctx(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        w.write_u32::<LittleEndian>(x.frames() as u32)?;
        w.write_u32::<LittleEndian>(x.bands() as u32)?;
        for &v in x.values() {
            w.write_f32::<LittleEndian>(v)?;
        }
        w.flush()
    })();
    res.ctx(|| format!("writing {}", path.display()))
}

pub fn read_feature_cache(path: &Path) -> Result<LogmelSpectrogram> {
    let file = File::open(path).ctx(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let frames = r
        .read_u32::<LittleEndian>()
        .ctx(|| format!("reading {}", path.display()))? as usize;
    let bands = r
        .read_u32::<LittleEndian>()
        .ctx(|| format!("reading {}", path.display()))? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .ctx(|| format!("reading {}", path.display()))?;
    if bytes.len() != frames * bands * 4 {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: format!("expected {} payload bytes, found {}", frames * bands * 4, bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    LogmelSpectrogram::from_values(values, frames, bands)
}
