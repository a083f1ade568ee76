//! Binary little-endian PLY for 3D flow: anchor point, flow vector and the
//! anchor's source pixel.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::flow::FlowField3D;
use crate::io::{read_bytes, write_with};
use crate::stereo::PixelCoord;

const HEADER_FIELDS: [(&str, &str); 8] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("float", "vx"),
    ("float", "vy"),
    ("float", "vz"),
    ("uint", "u"),
    ("uint", "v"),
];
const RECORD_BYTES: usize = 32;

/// One PLY vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowVertex {
    pub point: [f32; 3],
    pub flow: [f32; 3],
    pub pixel: PixelCoord,
}

impl FlowVertex {
    pub fn point_f64(&self) -> Vector3<f64> {
        Vector3::new(self.point[0] as f64, self.point[1] as f64, self.point[2] as f64)
    }
}

pub fn vertices_of(field: &FlowField3D) -> Vec<FlowVertex> {
    let f = |v: &Vector3<f64>| [v.x as f32, v.y as f32, v.z as f32];
    field
        .vectors
        .iter()
        .map(|fv| FlowVertex {
            point: f(&fv.prev_point),
            flow: f(&fv.vector),
            pixel: fv.anchor,
        })
        .collect()
}

pub fn encode_ply(vertices: &[FlowVertex]) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        vertices.len()
    );
    for (ty, name) in HEADER_FIELDS {
        out.push_str(&format!("property {ty} {name}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    bytes.reserve(vertices.len() * RECORD_BYTES);
    for v in vertices {
        for c in v.point.iter().chain(&v.flow) {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        bytes.extend_from_slice(&v.pixel.x.to_le_bytes());
        bytes.extend_from_slice(&v.pixel.y.to_le_bytes());
    }
    bytes
}

pub fn decode_ply(bytes: &[u8], origin: &Path) -> Result<Vec<FlowVertex>> {
    let fail = |msg: String| Error::Format(format!("{}: {msg}", origin.display()));
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| fail("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| fail("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(fail("missing ply magic".into()));
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err(fail("only binary_little_endian 1.0 is supported".into()));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| fail("missing vertex count".into()))?;
    for (ty, name) in HEADER_FIELDS {
        let want = format!("property {ty} {name}");
        if lines.next() != Some(want.as_str()) {
            return Err(fail(format!("expected {want:?}")));
        }
    }
    let body = &bytes[end + marker.len()..];
    if body.len() != count * RECORD_BYTES {
        return Err(fail(format!(
            "expected {} bytes for {count} vertices, found {}",
            count * RECORD_BYTES,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(RECORD_BYTES)
        .map(|r| {
            let f = |i: usize| f32::from_le_bytes(r[4 * i..4 * i + 4].try_into().unwrap());
            let u = |i: usize| u32::from_le_bytes(r[4 * i..4 * i + 4].try_into().unwrap());
            FlowVertex {
                point: [f(0), f(1), f(2)],
                flow: [f(3), f(4), f(5)],
                pixel: PixelCoord::new(u(6), u(7)),
            }
        })
        .collect())
}

pub fn write_ply(path: &Path, vertices: &[FlowVertex]) -> Result<()> {
    let bytes = encode_ply(vertices);
    write_with(path, |w| w.write_all(&bytes))
}

pub fn read_ply(path: &Path) -> Result<Vec<FlowVertex>> {
    decode_ply(&read_bytes(path)?, path)
}
