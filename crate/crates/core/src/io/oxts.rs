//! KITTI raw OXTS text: `timestamps.txt` plus one 30-field record per
//! sample in `data/NNNNNNNNNN.txt`.
//!
//! Field layout of the raw devkit: lat, lon, alt, roll, pitch, yaw, vn, ve,
//! vf, vl, vu, ax, ay, az, af, al, au, wx, wy, wz, wf, wl, wu, pos_accuracy,
//! vel_accuracy, navstat, numsats, posmode, velmode, orimode. The body
//! frame is x forward, y left, z up.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::imu::{ImuSample, Timestamp};
use crate::io::{parse_floats, read_text, write_with};

pub const OXTS_FIELDS: usize = 30;
pub const ACCEL_X: usize = 11;
pub const GYRO_X: usize = 17;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// Extracts accelerometer and gyroscope triples from one record.
pub fn parse_oxts_record(line: &str, path: &Path, line_no: usize) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let v = parse_floats(line, path, line_no)?;
    if v.len() != OXTS_FIELDS {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected {OXTS_FIELDS} fields, found {}", v.len()),
        ));
    }
    let accel = Vector3::new(v[ACCEL_X], v[ACCEL_X + 1], v[ACCEL_X + 2]);
    let gyro = Vector3::new(v[GYRO_X], v[GYRO_X + 1], v[GYRO_X + 2]);
    Ok((accel, gyro))
}

pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()
}

/// Parses `timestamps.txt` into times relative to `epoch` (or to the first
/// line when `epoch` is empty). Strictly increasing order is enforced.
pub fn parse_oxts_timestamps(text: &str, path: &Path, epoch: &str) -> Result<Vec<Timestamp>> {
    let mut origin = if epoch.trim().is_empty() {
        None
    } else {
        Some(parse_datetime(epoch).ok_or_else(|| Error::Config(format!("kitti.oxts_epoch: cannot parse {epoch:?}")))?)
    };
    let mut out: Vec<Timestamp> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dt = parse_datetime(line).ok_or_else(|| Error::parse(path, i + 1, format!("bad timestamp {line:?}")))?;
        let o = *origin.get_or_insert(dt);
        let ns = (dt - o)
            .num_nanoseconds()
            .ok_or_else(|| Error::parse(path, i + 1, "timestamp out of range"))?;
        let t = Timestamp(ns);
        if out.last().is_some_and(|p| t <= *p) {
            return Err(Error::parse(path, i + 1, "timestamps must strictly increase"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn parse_oxts_dir(dir: &Path, epoch: &str) -> Result<Vec<ImuSample>> {
    let ts_path = dir.join("timestamps.txt");
    let times = parse_oxts_timestamps(&read_text(&ts_path)?, &ts_path, epoch)?;
    times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = dir.join("data").join(format!("{i:010}.txt"));
            let text = read_text(&p)?;
            let (accel, gyro) = parse_oxts_record(text.lines().next().unwrap_or(""), &p, 1)?;
            Ok(ImuSample::new(*t, gyro, accel))
        })
        .collect()
}

/// Writes samples as OXTS records; unused fields are zero. `epoch` is the
/// wall-clock time of `Timestamp(0)`.
pub fn write_oxts_dir(dir: &Path, samples: &[ImuSample], epoch: &str) -> Result<()> {
    let origin = parse_datetime(epoch).ok_or_else(|| Error::InvalidArgument(format!("bad OXTS epoch {epoch:?}")))?;
    write_with(&dir.join("timestamps.txt"), |w| {
        for s in samples {
            let dt = origin + chrono::Duration::nanoseconds(s.t.0);
            writeln!(w, "{}", dt.format("%Y-%m-%d %H:%M:%S%.9f"))?;
        }
        Ok(())
    })?;
    for (i, s) in samples.iter().enumerate() {
        let mut fields = [0.0f64; OXTS_FIELDS];
        fields[ACCEL_X..ACCEL_X + 3].copy_from_slice(s.accel.as_slice());
        fields[GYRO_X..GYRO_X + 3].copy_from_slice(s.gyro.as_slice());
        let line: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
        write_with(&dir.join("data").join(format!("{i:010}.txt")), |w| writeln!(w, "{}", line.join(" ")))?;
    }
    Ok(())
}
