//! One-file-per-song feature cache.
//!
//! ```text
//! magic    8 bytes "HRFEATS1"
//! id_len   u32, song id (UTF-8)
//! tag_len  u32, segment strategy tag (UTF-8)
//! rows     u32 (mel bins)
//! cols     u32 (frames)
//! values   f64 × rows × cols, row-major, little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{MelSpectrogram, SegmentStrategy};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"HRFEATS1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCacheEntry {
    pub song_id: String,
    pub strategy: String,
    pub mel: MelSpectrogram,
}

/// `<dir>/<song id>.<strategy>.feat`
pub fn cache_path(dir: impl AsRef<Path>, song_id: &str, strategy: SegmentStrategy) -> PathBuf {
    dir.as_ref().join(format!("{song_id}.{}.feat", strategy.tag()))
}

pub fn write_feature_cache(path: impl AsRef<Path>, entry: &FeatureCacheEntry) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    for s in [&entry.song_id, &entry.strategy] {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        w.write_all(s.as_bytes())?;
    }
    w.write_all(&(entry.mel.bins() as u32).to_le_bytes())?;
    w.write_all(&(entry.mel.frames() as u32).to_le_bytes())?;
    for v in entry.mel.values().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "feature cache",
        detail: detail.into(),
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 4096 {
        return Err(bad("string field too long"));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("non UTF-8 string"))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<FeatureCacheEntry> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(bad("bad magic"));
    }
    let song_id = read_string(&mut r)?;
    let strategy = read_string(&mut r)?;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    if rows == 0 || cols == 0 || rows * cols > 1 << 24 {
        return Err(bad(format!("implausible shape {rows}x{cols}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut b = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    Ok(FeatureCacheEntry {
        song_id,
        strategy,
        mel: MelSpectrogram::from_tensor(Tensor::new(vec![rows, cols], data)?)?,
    })
}
