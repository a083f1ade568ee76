//! Readers and writers for datasets, label files and the run configuration.
//!
//! Floats in text formats are written with Rust's shortest round-trip
//! formatting, so every text writer here is lossless for `f64` values.

pub mod config;
pub mod euroc;
pub mod flo;
pub mod image;
pub mod kitti;
pub mod labels;
pub mod manifest;
pub mod oxts;
pub mod pfm;
pub mod rewrite;
pub mod ply;
pub mod trajectory;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imu::Timestamp;

pub use manifest::{FrameEntry, GroundTruth, Layout, SequenceManifest};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a buffered file, creating parent directories.
pub(crate) fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Parses whitespace-separated floats, reporting `line` (1-based) on error.
pub(crate) fn parse_floats(text: &str, path: &Path, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("not a number: {tok:?}")))
        })
        .collect()
}

/// Parses decimal seconds into nanoseconds without going through `f64`
/// when the value is plain positional notation with at most 9 fraction
/// digits. Exponent forms fall back to rounding an `f64`.
pub fn parse_seconds(tok: &str) -> Option<Timestamp> {
    let t = tok.trim();
    if t.contains(['e', 'E']) || t.is_empty() {
        let v: f64 = t.parse().ok()?;
        return v.is_finite().then(|| Timestamp::from_secs_f64(v));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 9 {
        let v: f64 = t.parse().ok()?;
        return Some(Timestamp::from_secs_f64(v));
    }
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut f: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..9 {
        f *= 10;
    }
    let ns = whole.checked_mul(1_000_000_000)?.checked_add(f)?;
    Some(Timestamp(if neg { -ns } else { ns }))
}

/// Seconds with exactly nine fraction digits; inverse of [`parse_seconds`].
pub fn format_seconds(t: Timestamp) -> String {
    let ns = t.0;
    let sign = if ns < 0 { "-" } else { "" };
    let a = ns.unsigned_abs();
    format!("{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)
}
