use std::path::PathBuf;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::imu::{ImuSample, Timestamp};
use crate::stereo::StereoRig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Kitti,
    Euroc,
}

impl std::str::FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitti" => Ok(Layout::Kitti),
            "euroc" => Ok(Layout::Euroc),
            other => Err(Error::InvalidArgument(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameEntry {
    pub t: Timestamp,
    pub left: PathBuf,
    pub right: PathBuf,
    pub disparity: PathBuf,
}

/// Ground truth resampled at the camera frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// World-from-left-camera poses, one per frame.
    pub camera_poses: Trajectory,
    /// World-frame body velocity per frame, when the dataset records it.
    pub velocities: Option<Vec<Vector3<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceManifest {
    pub layout: Layout,
    pub frames: Vec<FrameEntry>,
    pub imu: Vec<ImuSample>,
    pub ground_truth: Option<GroundTruth>,
    pub rig: StereoRig,
}

impl SequenceManifest {
    pub fn frame_times(&self) -> Vec<Timestamp> {
        self.frames.iter().map(|f| f.t).collect()
    }

    /// Checks monotone frame times and ground truth of matching length.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = (1..self.frames.len()).find(|&i| self.frames[i].t <= self.frames[i - 1].t) {
            return Err(Error::MalformedStream(format!("frame {i} timestamp does not increase")));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.camera_poses.len() != self.frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} frames but {} ground-truth poses",
                    self.frames.len(),
                    gt.camera_poses.len()
                )));
            }
            if let Some(v) = &gt.velocities {
                if v.len() != self.frames.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} frames but {} ground-truth velocities",
                        self.frames.len(),
                        v.len()
                    )));
                }
            }
        }
        Ok(())
    }
}
