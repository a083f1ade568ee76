//! Middlebury `.flo` files.
//!
//! Layout: magic `202021.25` as little-endian `f32`, `i32` width, `i32`
//! height, then row-major interleaved `f32` pairs `(u, v)`. Components above
//! [`UNKNOWN_THRESHOLD`] in magnitude mark unknown flow.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowField2D, FlowMask};
use crate::io::{read_bytes, write_with};

pub const FLO_MAGIC: f32 = 202021.25;
pub const UNKNOWN_THRESHOLD: f32 = 1e9;
/// Value written for invalid pixels.
pub const UNKNOWN_VALUE: f32 = 1e10;

pub fn encode_flo(field: &FlowField2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + field.flow().len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for (v, m) in field.flow().iter().zip(field.mask()) {
        let (u, w) = match m {
            FlowMask::Invalid => (UNKNOWN_VALUE, UNKNOWN_VALUE),
            _ => (v[0] as f32, v[1] as f32),
        };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Decodes a `.flo` payload; unknown pixels become invalid.
pub fn decode_flo(bytes: &[u8], origin: &Path) -> Result<FlowField2D> {
    let fail = |msg: String| Error::Format(format!("{}: {msg}", origin.display()));
    if bytes.len() < 12 {
        return Err(fail(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(fail(format!("bad magic {magic}")));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w < 0 || h < 0 {
        return Err(fail(format!("negative size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| fail(format!("size {w}x{h} overflows")))?;
    if bytes.len() != expected {
        return Err(fail(format!("expected {expected} bytes for {w}x{h}, found {}", bytes.len())));
    }
    let mut flow = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let u = f32::from_le_bytes(word(12 + 8 * i));
        let v = f32::from_le_bytes(word(16 + 8 * i));
        let unknown = !(u.abs() <= UNKNOWN_THRESHOLD && v.abs() <= UNKNOWN_THRESHOLD);
        if unknown {
            flow.push([0.0; 2]);
            mask.push(FlowMask::Invalid);
        } else {
            flow.push([u as f64, v as f64]);
            mask.push(FlowMask::Valid);
        }
    }
    FlowField2D::from_parts(w, h, flow, mask)
}

pub fn write_flo(path: &Path, field: &FlowField2D) -> Result<()> {
    let bytes = encode_flo(field);
    write_with(path, |w| w.write_all(&bytes))
}

pub fn read_flo(path: &Path) -> Result<FlowField2D> {
    decode_flo(&read_bytes(path)?, path)
}

/// Reads a `.flo` file together with its mask sidecar, restoring dynamic
/// pixels.
pub fn read_flo_with_mask(flo: &Path, mask: &Path) -> Result<FlowField2D> {
    let field = read_flo(flo)?;
    let m = crate::io::image::read_mask_png(mask)?;
    if m.len() != field.mask().len() {
        return Err(Error::DimensionMismatch(format!(
            "mask {} has {} pixels, flow has {}",
            mask.display(),
            m.len(),
            field.mask().len()
        )));
    }
    FlowField2D::from_parts(field.width(), field.height(), field.flow().to_vec(), m)
}
