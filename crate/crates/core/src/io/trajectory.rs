//! Pose and relative-pose text files.
//!
//! * KITTI poses: one `[R|t]` per line, 12 row-major floats.
//! * Timestamped poses: seconds (nine fraction digits) then the 12 floats.
//! * Relative records: start and end seconds, a convergence flag, the six
//!   tangent components `(ω, υ)` and a residual.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::imu::Timestamp;
use crate::io::{format_seconds, parse_floats, parse_seconds, read_text, write_with};
use crate::se3::{RigidTransform, Se3Tangent};

/// Largest orthonormality drift accepted (and projected away) when reading
/// rotations printed with limited precision.
pub const POSE_ROTATION_TOLERANCE: f64 = 1e-4;

pub(crate) fn write_row(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            write!(w, " ")?;
        }
        write!(w, "{x}")?;
    }
    Ok(())
}

fn pose_from_fields(v: &[f64], path: &Path, line: usize) -> Result<RigidTransform> {
    let arr: [f64; 12] = v
        .try_into()
        .map_err(|_| Error::parse(path, line, format!("expected 12 pose values, found {}", v.len())))?;
    RigidTransform::from_row_major_3x4(&arr, POSE_ROTATION_TOLERANCE)
        .map_err(|e| Error::parse(path, line, e.to_string()))
}

pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn write_kitti_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    write_with(path, |w| {
        for p in poses {
            write_row(w, &p.to_row_major_3x4())?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn parse_kitti_poses(text: &str, path: &Path) -> Result<Vec<RigidTransform>> {
    content_lines(text)
        .map(|(n, l)| pose_from_fields(&parse_floats(l, path, n)?, path, n))
        .collect()
}

pub fn read_kitti_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    parse_kitti_poses(&read_text(path)?, path)
}

pub fn write_timestamped_poses(path: &Path, traj: &Trajectory) -> Result<()> {
    write_with(path, |w| {
        for (t, p) in traj.entries() {
            write!(w, "{} ", format_seconds(*t))?;
            write_row(w, &p.to_row_major_3x4())?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn parse_timestamped_poses(text: &str, path: &Path) -> Result<Trajectory> {
    let mut entries = Vec::new();
    for (n, l) in content_lines(text) {
        let (ts, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        let t = parse_seconds(ts).ok_or_else(|| Error::parse(path, n, format!("bad timestamp {ts:?}")))?;
        entries.push((t, pose_from_fields(&parse_floats(rest, path, n)?, path, n)?));
    }
    Trajectory::new(entries).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn read_timestamped_poses(path: &Path) -> Result<Trajectory> {
    parse_timestamped_poses(&read_text(path)?, path)
}

/// Reads either pose format, deciding by the field count of the first line.
pub fn read_any_poses(path: &Path, fallback_times: Option<&[Timestamp]>) -> Result<Trajectory> {
    let text = read_text(path)?;
    let fields = content_lines(&text).next().map(|(_, l)| l.split_whitespace().count());
    if fields == Some(13) {
        return parse_timestamped_poses(&text, path);
    }
    let poses = parse_kitti_poses(&text, path)?;
    let times: Vec<Timestamp> = match fallback_times {
        Some(t) if t.len() == poses.len() => t.to_vec(),
        Some(t) => {
            return Err(Error::DimensionMismatch(format!(
                "{}: {} poses for {} timestamps",
                path.display(),
                poses.len(),
                t.len()
            )))
        }
        None => (0..poses.len() as i64).map(Timestamp).collect(),
    };
    Trajectory::new(times.into_iter().zip(poses).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeRecord {
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub valid: bool,
    pub xi: Se3Tangent,
    /// Mean ICP residual or another per-interval score.
    pub residual: f64,
}

pub fn write_relatives(path: &Path, records: &[RelativeRecord]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "# t0 t1 valid omega_x omega_y omega_z upsilon_x upsilon_y upsilon_z residual")?;
        for r in records {
            write!(
                w,
                "{} {} {} ",
                format_seconds(r.t0),
                format_seconds(r.t1),
                u8::from(r.valid)
            )?;
            write_row(w, &r.xi.to_array())?;
            writeln!(w, " {}", r.residual)?;
        }
        Ok(())
    })
}

pub fn parse_relatives(text: &str, path: &Path) -> Result<Vec<RelativeRecord>> {
    let mut out = Vec::new();
    for (n, l) in content_lines(text) {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 10 {
            return Err(Error::parse(path, n, format!("expected 10 fields, found {}", tok.len())));
        }
        let ts = |s: &str| parse_seconds(s).ok_or_else(|| Error::parse(path, n, format!("bad timestamp {s:?}")));
        let valid = match tok[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(path, n, format!("bad flag {other:?}"))),
        };
        let v = parse_floats(&tok[3..].join(" "), path, n)?;
        out.push(RelativeRecord {
            t0: ts(tok[0])?,
            t1: ts(tok[1])?,
            valid,
            xi: Se3Tangent::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]),
            residual: v[6],
        });
    }
    Ok(out)
}

pub fn read_relatives(path: &Path) -> Result<Vec<RelativeRecord>> {
    parse_relatives(&read_text(path)?, path)
}
