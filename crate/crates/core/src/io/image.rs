//! 8-bit mask PNGs and 16-bit disparity PNGs.

use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowField2D, FlowMask};
use crate::io::{read_bytes, write_with};
use crate::stereo::DisparityMap;

/// Gray levels of the flow mask sidecar.
pub const MASK_INVALID: u8 = 0;
pub const MASK_DYNAMIC: u8 = 128;
pub const MASK_VALID: u8 = 255;

/// Fixed-point scale of 16-bit disparity PNGs.
pub const DISPARITY_SCALE: f64 = 256.0;

fn encode_png(width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        w.write_image_data(data)
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
    }
    Ok(out)
}

/// Decodes a single-channel PNG of the given depth into raw bytes.
fn decode_gray(bytes: &[u8], path: &Path, depth: png::BitDepth) -> Result<(usize, usize, Vec<u8>)> {
    let fail = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    let mut reader = dec.read_info().map_err(|e| fail(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != depth {
        return Err(fail(format!(
            "expected {:?} grayscale, found {:?} {:?}",
            depth, info.bit_depth, info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fail("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| fail(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    Ok((w, h, buf))
}

pub fn write_mask_png(path: &Path, field: &FlowField2D) -> Result<()> {
    let data: Vec<u8> = field
        .mask()
        .iter()
        .map(|m| match m {
            FlowMask::Invalid => MASK_INVALID,
            FlowMask::Valid => MASK_VALID,
            FlowMask::Dynamic => MASK_DYNAMIC,
        })
        .collect();
    let bytes = encode_png(field.width(), field.height(), png::BitDepth::Eight, &data)?;
    write_with(path, |w| std::io::Write::write_all(w, &bytes))
}

/// Reads a mask sidecar. Gray levels other than the three codes are errors.
pub fn read_mask_png(path: &Path) -> Result<Vec<FlowMask>> {
    let (_, _, data) = decode_gray(&read_bytes(path)?, path, png::BitDepth::Eight)?;
    data.iter()
        .map(|&b| match b {
            MASK_INVALID => Ok(FlowMask::Invalid),
            MASK_VALID => Ok(FlowMask::Valid),
            MASK_DYNAMIC => Ok(FlowMask::Dynamic),
            other => Err(Error::Format(format!("{}: unexpected mask level {other}", path.display()))),
        })
        .collect()
}

/// Decodes a 16-bit disparity PNG; zero marks missing disparity.
pub fn decode_disparity_png16(bytes: &[u8], path: &Path) -> Result<DisparityMap> {
    let (w, h, data) = decode_gray(bytes, path, png::BitDepth::Sixteen)?;
    let raw: Vec<u16> = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    let values = raw.iter().map(|&v| v as f64 / DISPARITY_SCALE).collect();
    let valid = raw.iter().map(|&v| v > 0).collect();
    DisparityMap::from_parts(w, h, values, valid)
}

pub fn read_disparity_png16(path: &Path) -> Result<DisparityMap> {
    decode_disparity_png16(&read_bytes(path)?, path)
}

/// Quantizes to 1/256 px. Invalid pixels and values that would round to
/// zero are written as zero; values beyond the range saturate.
pub fn encode_disparity_png16(map: &DisparityMap) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(map.values().len() * 2);
    for (v, ok) in map.values().iter().zip(map.mask()) {
        let q = if *ok && v.is_finite() && *v > 0.0 {
            (v * DISPARITY_SCALE).round().clamp(0.0, u16::MAX as f64) as u16
        } else {
            0
        };
        data.extend_from_slice(&q.to_be_bytes());
    }
    encode_png(map.width(), map.height(), png::BitDepth::Sixteen, &data)
}

pub fn write_disparity_png16(path: &Path, map: &DisparityMap) -> Result<()> {
    let bytes = encode_disparity_png16(map)?;
    write_with(path, |w| std::io::Write::write_all(w, &bytes))
}
