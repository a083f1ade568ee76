//! Single-channel Portable Float Maps.
//!
//! Written little-endian (`-1.0` scale) with rows stored bottom to top, as
//! the format prescribes. Both endiannesses are accepted on read.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_with};
use crate::stereo::DisparityMap;

/// Raw single-channel image, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(img: &FloatImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for v in &img.data[row * img.width..(row + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits off the next whitespace-delimited header token.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok()).flatten()
}

pub fn decode_pfm(bytes: &[u8], origin: &Path) -> Result<FloatImage> {
    let fail = |msg: &str| Error::Format(format!("{}: {msg}", origin.display()));
    let mut pos = 0;
    match token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err(fail("three-channel PFM is not supported")),
        _ => return Err(fail("missing Pf magic")),
    }
    let mut num = |what: &str| -> Result<String> {
        token(bytes, &mut pos)
            .map(str::to_owned)
            .ok_or_else(|| fail(&format!("missing {what}")))
    };
    let w: usize = num("width")?.parse().map_err(|_| fail("bad width"))?;
    let h: usize = num("height")?.parse().map_err(|_| fail("bad height"))?;
    let scale: f64 = num("scale")?.parse().map_err(|_| fail("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(fail("scale must be non-zero"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let n = w.checked_mul(h).ok_or_else(|| fail("size overflows"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != n * 4 {
        return Err(fail(&format!("expected {} payload bytes, found {}", n * 4, payload.len())));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; n];
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / w.max(1), i % w.max(1));
        data[(h - 1 - row) * w + col] = v;
    }
    Ok(FloatImage {
        width: w,
        height: h,
        data,
    })
}

pub fn write_pfm(path: &Path, img: &FloatImage) -> Result<()> {
    let bytes = encode_pfm(img);
    write_with(path, |w| w.write_all(&bytes))
}

pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    decode_pfm(&read_bytes(path)?, path)
}

/// Disparity from a PFM; non-finite or non-positive values are missing.
pub fn read_disparity_pfm(path: &Path) -> Result<DisparityMap> {
    let img = read_pfm(path)?;
    let values = img.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
    let values = values.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
    DisparityMap::from_parts(img.width, img.height, values, valid)
}

/// Missing pixels are written as zero.
pub fn write_disparity_pfm(path: &Path, map: &DisparityMap) -> Result<()> {
    let data = map
        .values()
        .iter()
        .zip(map.mask())
        .map(|(v, ok)| if *ok { *v as f32 } else { 0.0 })
        .collect();
    write_pfm(
        path,
        &FloatImage {
            width: map.width(),
            height: map.height(),
            data,
        },
    )
}
