//! EuRoC ASL layout.
//!
//! ```text
//! <root>/mav0/imu0/data.csv                       ns, gyro xyz, accel xyz
//! <root>/mav0/cam0/data.csv, cam1/data.csv        ns, filename
//! <root>/mav0/state_groundtruth_estimate0/data.csv  (optional)
//! <root>/mav0/disparity/<ns>.png (16-bit) or <ns>.pfm
//! ```
//!
//! Calibration is taken from the run configuration rather than the sensor
//! YAML files. Ground truth gives IMU-frame poses; they are resampled at the
//! camera times and moved to the left camera through `cam_to_imu`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::imu::{ImuSample, Timestamp};
use crate::io::manifest::{FrameEntry, GroundTruth, Layout, SequenceManifest};
use crate::io::{read_text, write_with};
use crate::se3::{RigidTransform, Rotation};
use crate::stereo::StereoRig;

pub const IMU_COLUMNS: [&str; 7] = ["#timestamp", "w_RS_S_x", "w_RS_S_y", "w_RS_S_z", "a_RS_S_x", "a_RS_S_y", "a_RS_S_z"];
const IMU_UNITS: [&str; 7] = ["[ns]", "[rad s^-1]", "[rad s^-1]", "[rad s^-1]", "[m s^-2]", "[m s^-2]", "[m s^-2]"];
pub const CAM_COLUMNS: [&str; 2] = ["#timestamp", "filename"];
pub const GT_COLUMNS: [&str; 17] = [
    "#timestamp", "p_RS_R_x", "p_RS_R_y", "p_RS_R_z", "q_RS_w", "q_RS_x", "q_RS_y", "q_RS_z", "v_RS_R_x", "v_RS_R_y",
    "v_RS_R_z", "b_w_RS_S_x", "b_w_RS_S_y", "b_w_RS_S_z", "b_a_RS_S_x", "b_a_RS_S_y", "b_a_RS_S_z",
];

/// One ground-truth row: IMU pose, world velocity and the estimator's biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EurocState {
    pub t: Timestamp,
    pub pose: RigidTransform,
    pub velocity: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

pub fn mav_dir(root: &Path) -> PathBuf {
    root.join("mav0")
}

/// Checks a header against expected column labels, ignoring unit suffixes
/// and surrounding spaces.
fn check_header(line: &str, expected: &[&str], path: &Path) -> Result<()> {
    let cols: Vec<&str> = line.split(',').map(|c| c.split_whitespace().next().unwrap_or("")).collect();
    if cols.len() != expected.len() || cols.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::parse(
            path,
            1,
            format!("header mismatch: expected {}", expected.join(",")),
        ));
    }
    Ok(())
}

/// Data rows with their 1-based line numbers; the first line must be the
/// header.
fn csv_rows<'a>(text: &'a str, expected: &[&str], path: &Path) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    check_header(header, expected, path)?;
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != expected.len() {
            return Err(Error::parse(
                path,
                i + 2,
                format!("expected {} columns, found {}", expected.len(), f.len()),
            ));
        }
        rows.push((i + 2, f));
    }
    Ok(rows)
}

fn int_ns(tok: &str, path: &Path, line: usize) -> Result<Timestamp> {
    tok.parse::<i64>()
        .map(Timestamp)
        .map_err(|_| Error::parse(path, line, format!("bad nanosecond timestamp {tok:?}")))
}

fn floats(toks: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, line, format!("not a number: {t:?}"))))
        .collect()
}

fn increasing(t: Timestamp, prev: Option<Timestamp>, path: &Path, line: usize) -> Result<()> {
    if prev.is_some_and(|p| t <= p) {
        return Err(Error::parse(path, line, "timestamps must strictly increase"));
    }
    Ok(())
}

pub fn parse_imu_csv(text: &str, path: &Path) -> Result<Vec<ImuSample>> {
    let mut out: Vec<ImuSample> = Vec::new();
    for (n, f) in csv_rows(text, &IMU_COLUMNS, path)? {
        let t = int_ns(f[0], path, n)?;
        increasing(t, out.last().map(|s| s.t), path, n)?;
        let v = floats(&f[1..], path, n)?;
        out.push(ImuSample::new(t, Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])));
    }
    Ok(out)
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_with(path, |w| {
        let header: Vec<String> = IMU_COLUMNS.iter().zip(IMU_UNITS).map(|(c, u)| format!("{c} {u}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.t.0, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
            )?;
        }
        Ok(())
    })
}

pub fn parse_cam_csv(text: &str, path: &Path) -> Result<Vec<(Timestamp, String)>> {
    let mut out: Vec<(Timestamp, String)> = Vec::new();
    for (n, f) in csv_rows(text, &CAM_COLUMNS, path)? {
        let t = int_ns(f[0], path, n)?;
        increasing(t, out.last().map(|x| x.0), path, n)?;
        out.push((t, f[1].to_string()));
    }
    Ok(out)
}

pub fn write_cam_csv(path: &Path, times: &[Timestamp]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "#timestamp [ns],filename")?;
        for t in times {
            writeln!(w, "{},{}.png", t.0, t.0)?;
        }
        Ok(())
    })
}

pub fn parse_groundtruth_csv(text: &str, path: &Path) -> Result<Vec<EurocState>> {
    let mut out: Vec<EurocState> = Vec::new();
    for (n, f) in csv_rows(text, &GT_COLUMNS, path)? {
        let t = int_ns(f[0], path, n)?;
        increasing(t, out.last().map(|s| s.t), path, n)?;
        let v = floats(&f[1..], path, n)?;
        let q_norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if (q_norm - 1.0).abs() > 1e-3 {
            return Err(Error::parse(path, n, format!("quaternion norm {q_norm} is not 1")));
        }
        out.push(EurocState {
            t,
            pose: RigidTransform::new(
                Rotation::from_quaternion(v[3], v[4], v[5], v[6]),
                Vector3::new(v[0], v[1], v[2]),
            ),
            velocity: Vector3::new(v[7], v[8], v[9]),
            gyro_bias: Vector3::new(v[10], v[11], v[12]),
            accel_bias: Vector3::new(v[13], v[14], v[15]),
        });
    }
    Ok(out)
}

pub fn write_groundtruth_csv(path: &Path, states: &[EurocState]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{}", GT_COLUMNS.join(", "))?;
        for s in states {
            let [qw, qx, qy, qz] = s.pose.rotation.to_quaternion();
            let p = s.pose.translation;
            let vals = [
                p.x, p.y, p.z, qw, qx, qy, qz, s.velocity.x, s.velocity.y, s.velocity.z, s.gyro_bias.x,
                s.gyro_bias.y, s.gyro_bias.z, s.accel_bias.x, s.accel_bias.y, s.accel_bias.z,
            ];
            let vals: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", s.t.0, vals.join(","))?;
        }
        Ok(())
    })
}

/// Linear interpolation of ground truth at `t`; `None` outside its span.
pub fn interpolate_state(states: &[EurocState], t: Timestamp) -> Option<(RigidTransform, Vector3<f64>)> {
    let k = states.partition_point(|s| s.t < t);
    if k < states.len() && states[k].t == t {
        return Some((states[k].pose, states[k].velocity));
    }
    if k == 0 || k == states.len() {
        return None;
    }
    let (a, b) = (&states[k - 1], &states[k]);
    let s = (t - a.t) as f64 / (b.t - a.t) as f64;
    Some((a.pose.interpolate(&b.pose, s), a.velocity.lerp(&b.velocity, s)))
}

/// `<ns>.png` when present, otherwise `<ns>.pfm`.
fn disparity_path(dir: &Path, t: Timestamp) -> PathBuf {
    let png = dir.join(format!("{}.png", t.0));
    if png.exists() {
        png
    } else {
        png.with_extension("pfm")
    }
}

/// Loads a sequence. When ground truth exists, frames outside its time span
/// are skipped so every kept frame has a pose.
pub fn parse_euroc(root: &Path, rig: StereoRig) -> Result<SequenceManifest> {
    let mav = mav_dir(root);
    let imu_path = mav.join("imu0").join("data.csv");
    let imu = parse_imu_csv(&read_text(&imu_path)?, &imu_path)?;
    let cam0_path = mav.join("cam0").join("data.csv");
    let cams = parse_cam_csv(&read_text(&cam0_path)?, &cam0_path)?;
    let gt_path = mav.join("state_groundtruth_estimate0").join("data.csv");
    let states = if gt_path.exists() {
        Some(parse_groundtruth_csv(&read_text(&gt_path)?, &gt_path)?)
    } else {
        None
    };

    let mut frames = Vec::new();
    let mut poses = Vec::new();
    let mut velocities = Vec::new();
    for (t, name) in cams {
        if let Some(states) = &states {
            let Some((pose, vel)) = interpolate_state(states, t) else {
                continue;
            };
            poses.push((t, pose * rig.cam_to_imu));
            velocities.push(vel);
        }
        frames.push(FrameEntry {
            t,
            left: mav.join("cam0").join("data").join(&name),
            right: mav.join("cam1").join("data").join(&name),
            disparity: disparity_path(&mav.join("disparity"), t),
        });
    }
    let ground_truth = match states {
        Some(_) => Some(GroundTruth {
            camera_poses: Trajectory::new(poses)?,
            velocities: Some(velocities),
        }),
        None => None,
    };
    let manifest = SequenceManifest {
        layout: Layout::Euroc,
        frames,
        imu,
        ground_truth,
        rig,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes the CSV files of the layout. Disparity maps are written by the
/// caller into `mav0/disparity`.
pub fn write_euroc(root: &Path, frame_times: &[Timestamp], imu: &[ImuSample], states: Option<&[EurocState]>) -> Result<()> {
    let mav = mav_dir(root);
    write_imu_csv(&mav.join("imu0").join("data.csv"), imu)?;
    write_cam_csv(&mav.join("cam0").join("data.csv"), frame_times)?;
    write_cam_csv(&mav.join("cam1").join("data.csv"), frame_times)?;
    if let Some(s) = states {
        write_groundtruth_csv(&mav.join("state_groundtruth_estimate0").join("data.csv"), s)?;
    }
    Ok(())
}
