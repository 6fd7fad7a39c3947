//! Binary feature caches.
//!
//! `TMBF` (one file per split), all integers little-endian:
//!
//! ```text
//! "TMBF" | u32 version=1 | u32 n_samples | u32 n_mels | u32 n_frames
//! per sample: u32 class_index | u16 path_len | path (UTF-8) | n_mels·n_frames f32
//! ```
//!
//! `TMBS` (normalization sidecar): `"TMBS" | n_mels f32 means | n_mels f32 stds`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DspError, NormStats};
use crate::N_MELS;

const CACHE_MAGIC: &[u8; 4] = b"TMBF";
const STATS_MAGIC: &[u8; 4] = b"TMBS";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub class_index: u32,
    pub path: String,
    /// Frequency-major `n_mels × n_frames` values.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub n_mels: usize,
    pub n_frames: usize,
    pub entries: Vec<CacheEntry>,
}

impl FeatureCache {
    pub fn new(n_mels: usize, n_frames: usize) -> Self {
        Self {
            n_mels,
            n_frames,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class_index as usize).collect()
    }
}

fn bad(msg: impl Into<String>) -> DspError {
    DspError::CacheFormat(msg.into())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], DspError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad("truncated"),
        _ => DspError::Io(e),
    })?;
    Ok(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32, DspError> {
    Ok(u32::from_le_bytes(read_array::<4>(r)?))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>, DspError> {
    let mut bytes = vec![0u8; 4 * n];
    r.read_exact(&mut bytes).map_err(|_| bad("truncated values"))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_cache(path: &Path, cache: &FeatureCache) -> Result<(), DspError> {
    let per = cache.n_mels * cache.n_frames;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    for v in [
        CACHE_VERSION,
        cache.entries.len() as u32,
        cache.n_mels as u32,
        cache.n_frames as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for e in &cache.entries {
        if e.values.len() != per {
            return Err(DspError::ShapeMismatch(format!(
                "{}: {} values, expected {per}",
                e.path,
                e.values.len()
            )));
        }
        let path_bytes = e.path.as_bytes();
        let len = u16::try_from(path_bytes.len()).map_err(|_| bad(format!("path too long: {}", e.path)))?;
        w.write_all(&e.class_index.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(path_bytes)?;
        for v in &e.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<FeatureCache, DspError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DspError::FileNotFound(path.to_path_buf()),
        _ => DspError::Io(e),
    })?;
    let mut r = BufReader::new(file);
    if &read_array::<4>(&mut r)? != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let n_mels = read_u32(&mut r)? as usize;
    let n_frames = read_u32(&mut r)? as usize;
    let mut cache = FeatureCache::new(n_mels, n_frames);
    for _ in 0..n {
        let class_index = read_u32(&mut r)?;
        let len = u16::from_le_bytes(read_array::<2>(&mut r)?) as usize;
        let mut pb = vec![0u8; len];
        r.read_exact(&mut pb).map_err(|_| bad("truncated path"))?;
        let path = String::from_utf8(pb).map_err(|_| bad("path is not UTF-8"))?;
        let values = read_f32s(&mut r, n_mels * n_frames)?;
        cache.entries.push(CacheEntry {
            class_index,
            path,
            values,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(cache)
}

pub fn write_stats(path: &Path, stats: &NormStats) -> Result<(), DspError> {
    if stats.mean.len() != N_MELS || stats.std.len() != N_MELS {
        return Err(DspError::ShapeMismatch(format!(
            "statistics for {} bins, sidecar holds {N_MELS}",
            stats.mean.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STATS_MAGIC)?;
    for &v in stats.mean.iter().chain(&stats.std) {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats(path: &Path) -> Result<NormStats, DspError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DspError::FileNotFound(path.to_path_buf()),
        _ => DspError::Io(e),
    })?;
    let mut r = BufReader::new(file);
    if &read_array::<4>(&mut r)? != STATS_MAGIC {
        return Err(bad("bad magic"));
    }
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect();
    let mean = widen(read_f32s(&mut r, N_MELS)?);
    let std = widen(read_f32s(&mut r, N_MELS)?);
    Ok(NormStats { mean, std })
}
