//! Per-frame body attitude and velocity needed to turn preintegrated
//! deltas into relative poses.

use nalgebra::Vector3;
use vio_geom::io::config::{KinematicsSource, RunConfig};
use vio_geom::io::trajectory::RelativeRecord;
use vio_geom::io::SequenceManifest;
use vio_geom::preint::Kinematics;
use vio_geom::se3::Se3Tangent;
use vio_geom::{Error, Result, RigidTransform, Timestamp};

use super::scale_tangent;

/// Body state at one camera frame, world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameState {
    pub body_pose: RigidTransform,
    pub velocity: Vector3<f64>,
}

impl FrameState {
    pub fn kinematics(&self, gravity: Vector3<f64>) -> Kinematics {
        Kinematics {
            v0: self.body_pose.rotation.inverse().rotate(&self.velocity),
            gravity,
            frame0_rotation: self.body_pose.rotation,
        }
    }
}

/// Central differences in the interior, one-sided at the ends.
pub fn finite_difference_velocities(times: &[Timestamp], positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = positions.len();
    if n < 2 {
        return vec![Vector3::zeros(); n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (positions[b] - positions[a]) / times[b].seconds_since(times[a])
        })
        .collect()
}

/// Chains relative camera motions from `origin`. Invalid intervals repeat
/// the last valid motion, stretched to the interval length.
pub fn chain_with_hold(origin: &RigidTransform, records: &[RelativeRecord]) -> Vec<RigidTransform> {
    let mut poses = vec![*origin];
    let mut last: Option<(Se3Tangent, f64)> = None;
    for r in records {
        let dt = r.t1.seconds_since(r.t0);
        let xi = if r.valid {
            last = Some((r.xi, dt));
            r.xi
        } else {
            last.map(|(xi, d)| scale_tangent(&xi, dt / d)).unwrap_or_else(Se3Tangent::zero)
        };
        let next = poses.last().expect("origin present").compose(&xi.exp());
        poses.push(next);
    }
    poses
}

/// Checks that relative records line up with the manifest's frames.
pub fn check_alignment(m: &SequenceManifest, records: &[RelativeRecord], what: &str) -> Result<()> {
    let n = m.frames.len().saturating_sub(1);
    if records.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} intervals for {} frames",
            records.len(),
            m.frames.len()
        )));
    }
    for (i, r) in records.iter().enumerate() {
        if r.t0 != m.frames[i].t || r.t1 != m.frames[i + 1].t {
            return Err(Error::DimensionMismatch(format!(
                "{what}: interval {i} is [{}, {}], frames are [{}, {}]",
                r.t0,
                r.t1,
                m.frames[i].t,
                m.frames[i + 1].t
            )));
        }
    }
    Ok(())
}

/// Starting camera pose: the first ground-truth pose, else the identity.
pub fn origin(m: &SequenceManifest) -> RigidTransform {
    m.ground_truth
        .as_ref()
        .and_then(|g| g.camera_poses.entries().first().map(|e| e.1))
        .unwrap_or_else(RigidTransform::identity)
}

/// Body states per frame from the configured source.
pub fn frame_states(m: &SequenceManifest, cfg: &RunConfig, stereo: Option<&[RelativeRecord]>) -> Result<Vec<FrameState>> {
    let cam_to_body = m.rig.cam_to_imu;
    let body_to_cam = cam_to_body.inverse();
    let times = m.frame_times();
    let (camera_poses, velocities): (Vec<RigidTransform>, Option<Vec<Vector3<f64>>>) = match cfg.pipeline.kinematics_source {
        KinematicsSource::GroundTruth => {
            let gt = m.ground_truth.as_ref().ok_or_else(|| {
                Error::Config("pipeline.kinematics_source = \"ground_truth\" but the dataset has no ground truth".into())
            })?;
            (gt.camera_poses.poses().copied().collect(), gt.velocities.clone())
        }
        KinematicsSource::Stereo => {
            let records = stereo.ok_or_else(|| {
                Error::Config("pipeline.kinematics_source = \"stereo\" needs stereo_se3 labels".into())
            })?;
            check_alignment(m, records, "stereo labels")?;
            (chain_with_hold(&origin(m), records), None)
        }
    };
    let body_poses: Vec<RigidTransform> = camera_poses.iter().map(|p| p.compose(&body_to_cam)).collect();
    let velocities = velocities.unwrap_or_else(|| {
        let positions: Vec<Vector3<f64>> = body_poses.iter().map(|p| p.translation).collect();
        finite_difference_velocities(&times, &positions)
    });
    Ok(body_poses
        .into_iter()
        .zip(velocities)
        .map(|(body_pose, velocity)| FrameState { body_pose, velocity })
        .collect())
}

/// Relative camera motion from a relative body motion.
pub fn body_to_camera_relative(body_rel: &RigidTransform, cam_to_body: &RigidTransform) -> RigidTransform {
    cam_to_body.inverse().compose(body_rel).compose(cam_to_body)
}

pub fn camera_to_body_relative(cam_rel: &RigidTransform, cam_to_body: &RigidTransform) -> RigidTransform {
    cam_to_body.compose(cam_rel).compose(&cam_to_body.inverse())
}
