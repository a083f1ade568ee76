//! KITTI odometry layout.
//!
//! ```text
//! <root>/sequences/<seq>/times.txt         seconds per frame
//! <root>/sequences/<seq>/calib.txt         P0..P3 projection matrices
//! <root>/sequences/<seq>/image_2, image_3  left and right color images
//! <root>/sequences/<seq>/disparity/NNNNNN.png (16-bit) or .pfm
//! <root>/sequences/<seq>/oxts/             optional OXTS stream
//! <root>/poses/<seq>.txt                   optional ground truth
//! ```
//!
//! The color pair (cameras 2 and 3) is the stereo rig. Ground truth in the
//! odometry release is expressed for camera 0, so poses are shifted by the
//! camera 2 offset encoded in `P2`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::imu::{ImuSample, Timestamp};
use crate::io::config::{KittiConfig, RigConfig};
use crate::io::manifest::{FrameEntry, GroundTruth, Layout, SequenceManifest};
use crate::io::oxts::{parse_oxts_dir, write_oxts_dir};
use crate::io::trajectory::{parse_kitti_poses, write_kitti_poses};
use crate::io::{format_seconds, parse_floats, parse_seconds, read_text, write_with};
use crate::se3::RigidTransform;
use crate::stereo::{CameraIntrinsics, StereoRig};

/// What `calib.txt` encodes for the color pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KittiCalibration {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
    /// Horizontal offset of camera 2 from camera 0, meters (camera 0 frame).
    pub cam2_offset: f64,
}

pub fn sequence_dir(root: &Path, sequence: &str) -> PathBuf {
    root.join("sequences").join(sequence)
}

pub fn frame_name(i: usize) -> String {
    format!("{i:06}")
}

pub fn parse_times(text: &str, path: &Path) -> Result<Vec<Timestamp>> {
    let mut out: Vec<Timestamp> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        let t = parse_seconds(l).ok_or_else(|| Error::parse(path, i + 1, format!("bad time {l:?}")))?;
        if out.last().is_some_and(|p| t <= *p) {
            return Err(Error::parse(path, i + 1, "times must strictly increase"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn parse_calib(text: &str, path: &Path) -> Result<KittiCalibration> {
    let mut p2 = None;
    let mut p3 = None;
    for (i, line) in text.lines().enumerate() {
        let Some((key, rest)) = line.split_once(':') else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(path, i + 1, "expected `KEY: values`"));
        };
        let slot = match key.trim() {
            "P2" => &mut p2,
            "P3" => &mut p3,
            _ => continue,
        };
        let v = parse_floats(rest, path, i + 1)?;
        if v.len() != 12 {
            return Err(Error::parse(path, i + 1, format!("projection needs 12 values, found {}", v.len())));
        }
        *slot = Some((i + 1, v));
    }
    let (line2, p2) = p2.ok_or_else(|| Error::parse(path, 0, "missing P2"))?;
    let (_, p3) = p3.ok_or_else(|| Error::parse(path, 0, "missing P3"))?;
    let (fx, cx, fy, cy) = (p2[0], p2[2], p2[5], p2[6]);
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| Error::parse(path, line2, e.to_string()))?;
    let baseline = -(p3[3] - p2[3]) / fx;
    if !(baseline > 0.0) {
        return Err(Error::parse(path, 0, format!("P2/P3 imply non-positive baseline {baseline}")));
    }
    Ok(KittiCalibration {
        intrinsics,
        baseline,
        cam2_offset: p2[3] / fx,
    })
}

/// Writes P0..P3 for a rig whose camera 0 coincides with camera 2.
pub fn write_calib(path: &Path, calib: &KittiCalibration) -> Result<()> {
    let k = calib.intrinsics;
    let row = |tx: f64| [k.fx, 0.0, k.cx, tx, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0];
    let p2 = row(calib.cam2_offset * k.fx);
    let p3 = row((calib.cam2_offset - calib.baseline) * k.fx);
    write_with(path, |w| {
        for (name, p) in [("P0", &p2), ("P1", &p3), ("P2", &p2), ("P3", &p3)] {
            let vals: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{name}: {}", vals.join(" "))?;
        }
        Ok(())
    })
}

fn disparity_path(dir: &Path, i: usize) -> PathBuf {
    let png = dir.join("disparity").join(format!("{}.png", frame_name(i)));
    if png.exists() {
        png
    } else {
        png.with_extension("pfm")
    }
}

/// Resolves the OXTS directory for a sequence, if any.
fn oxts_dir(root: &Path, sequence: &str, cfg: &KittiConfig) -> Option<PathBuf> {
    if let Some(p) = cfg.raw_drives.get(sequence) {
        let p = PathBuf::from(p);
        return Some(if p.is_absolute() { p } else { root.join(p) });
    }
    let local = sequence_dir(root, sequence).join("oxts");
    local.is_dir().then_some(local)
}

/// Loads a sequence. `rig_cfg` supplies only the camera-to-IMU extrinsic;
/// intrinsics and baseline come from `calib.txt`.
pub fn parse_kitti_odometry(root: &Path, cfg: &KittiConfig, rig_cfg: &RigConfig) -> Result<SequenceManifest> {
    let seq = cfg.sequence.as_str();
    let dir = sequence_dir(root, seq);
    let times_path = dir.join("times.txt");
    let times = parse_times(&read_text(&times_path)?, &times_path)?;
    let calib_path = dir.join("calib.txt");
    let calib = parse_calib(&read_text(&calib_path)?, &calib_path)?;
    let rig = StereoRig::new(calib.intrinsics, calib.baseline, rig_cfg.cam_to_imu()?)?;

    let frames = (0..times.len())
        .map(|i| FrameEntry {
            t: times[i],
            left: dir.join("image_2").join(format!("{}.png", frame_name(i))),
            right: dir.join("image_3").join(format!("{}.png", frame_name(i))),
            disparity: disparity_path(&dir, i),
        })
        .collect();

    let poses_path = root.join("poses").join(format!("{seq}.txt"));
    let ground_truth = if poses_path.exists() {
        let poses = parse_kitti_poses(&read_text(&poses_path)?, &poses_path)?;
        if poses.len() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}: {} poses for {} frames",
                poses_path.display(),
                poses.len(),
                times.len()
            )));
        }
        let cam0_to_cam2 = RigidTransform::from_translation(Vector3::new(-calib.cam2_offset, 0.0, 0.0));
        let entries = times.iter().zip(poses).map(|(t, p)| (*t, p * cam0_to_cam2)).collect();
        Some(GroundTruth {
            camera_poses: Trajectory::new(entries)?,
            velocities: None,
        })
    } else {
        None
    };

    let imu = match oxts_dir(root, seq, cfg) {
        Some(d) => parse_oxts_dir(&d, &cfg.oxts_epoch)?,
        None => Vec::new(),
    };

    let manifest = SequenceManifest {
        layout: Layout::Kitti,
        frames,
        imu,
        ground_truth,
        rig,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes times, calibration, optional poses and optional OXTS. Disparity
/// maps are written by the caller into `sequences/<seq>/disparity`.
pub fn write_kitti_odometry(
    root: &Path,
    sequence: &str,
    times: &[Timestamp],
    rig: &StereoRig,
    camera_poses: Option<&[RigidTransform]>,
    imu: Option<(&[ImuSample], &str)>,
) -> Result<()> {
    let dir = sequence_dir(root, sequence);
    write_with(&dir.join("times.txt"), |w| {
        for t in times {
            writeln!(w, "{}", format_seconds(*t))?;
        }
        Ok(())
    })?;
    write_calib(
        &dir.join("calib.txt"),
        &KittiCalibration {
            intrinsics: rig.intrinsics,
            baseline: rig.baseline,
            cam2_offset: 0.0,
        },
    )?;
    if let Some(poses) = camera_poses {
        write_kitti_poses(&root.join("poses").join(format!("{sequence}.txt")), poses)?;
    }
    if let Some((samples, epoch)) = imu {
        write_oxts_dir(&dir.join("oxts"), samples, epoch)?;
    }
    Ok(())
}
