//! Seeded injectors for sensor degradations: rotational miscalibration,
//! IMU time offsets, and IMU or camera sample drops.
//!
//! Each injector draws from its own stream of [`SeededRng`], so enabling one
//! condition never changes the draws of another. When several are applied
//! the order is miscalibrate, desync, then drops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuSample, Timestamp};
use crate::rng::SeededRng;
use crate::se3::so3_exp;
use crate::stereo::StereoRig;

pub const STREAM_MISCALIBRATION: u64 = 0;
pub const STREAM_DESYNC: u64 = 1;
pub const STREAM_IMU_DROP: u64 = 2;
pub const STREAM_CAMERA_DROP: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesyncMode {
    /// Every timestamp moves by exactly the offset.
    #[default]
    Constant,
    /// Every timestamp moves by an independent uniform draw in `[0, offset]`.
    Jitter,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSpec {
    pub miscal_deg: f64,
    pub desync_ms: f64,
    pub desync_mode: DesyncMode,
    pub imu_drop_rate: f64,
    pub cam_drop_rate: f64,
    pub seed: Option<u64>,
}

impl DegradationSpec {
    pub fn is_identity(&self) -> bool {
        self.miscal_deg == 0.0
            && self.desync_ms == 0.0
            && self.imu_drop_rate == 0.0
            && self.cam_drop_rate == 0.0
    }

    /// The four robustness conditions at their usual strengths.
    pub fn table_conditions(seed: u64) -> Self {
        DegradationSpec {
            miscal_deg: 10.0,
            desync_ms: 20.0,
            desync_mode: DesyncMode::Constant,
            imu_drop_rate: 0.9,
            cam_drop_rate: 0.5,
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.imu_drop_rate) || !rate_ok(self.cam_drop_rate) {
            return Err(Error::InvalidArgument(format!(
                "drop rates must lie in [0, 1], got imu {} and camera {}",
                self.imu_drop_rate, self.cam_drop_rate
            )));
        }
        if !(self.miscal_deg >= 0.0 && self.miscal_deg.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "miscalibration angle must be non-negative, got {}",
                self.miscal_deg
            )));
        }
        if !self.desync_ms.is_finite() {
            return Err(Error::InvalidArgument("desync offset must be finite".into()));
        }
        let randomized = self.miscal_deg > 0.0
            || self.imu_drop_rate > 0.0
            || self.cam_drop_rate > 0.0
            || (self.desync_mode == DesyncMode::Jitter && self.desync_ms != 0.0);
        if randomized && self.seed.is_none() {
            return Err(Error::InvalidArgument(
                "a seed is required when any degradation is random".into(),
            ));
        }
        Ok(())
    }
}

/// Rotates `cam_to_imu` by exactly `angle_deg` about a seeded random axis.
pub fn miscalibrate(rig: &StereoRig, angle_deg: f64, seed: u64) -> StereoRig {
    if angle_deg == 0.0 {
        return *rig;
    }
    let axis = SeededRng::new(seed, STREAM_MISCALIBRATION).unit_vector();
    let mut out = *rig;
    out.cam_to_imu.rotation = rig
        .cam_to_imu
        .rotation
        .compose(&so3_exp(&(axis * angle_deg.to_radians())));
    out
}

fn offset_nanos(offset_ms: f64) -> i64 {
    (offset_ms * 1e6).round() as i64
}

/// Where each sample goes under [`desync`]: `(source index, new time)` in
/// output order. Jittered times are re-sorted and samples that collide on
/// one timestamp keep only the earliest original.
pub fn desync_plan(times: &[Timestamp], offset_ms: f64, mode: DesyncMode, seed: u64) -> Vec<(usize, Timestamp)> {
    let off = offset_nanos(offset_ms);
    match mode {
        DesyncMode::Constant => times.iter().enumerate().map(|(i, t)| (i, *t + off)).collect(),
        DesyncMode::Jitter => {
            let mut rng = SeededRng::new(seed, STREAM_DESYNC);
            let mut out: Vec<(usize, Timestamp)> = times
                .iter()
                .enumerate()
                .map(|(i, t)| (i, Timestamp(t.0 + (rng.uniform() * off as f64).round() as i64)))
                .collect();
            out.sort_by_key(|&(i, t)| (t, i));
            out.dedup_by_key(|x| x.1);
            out
        }
    }
}

/// Shifts IMU timestamps by a constant or jittered offset.
pub fn desync(stream: &[ImuSample], offset_ms: f64, mode: DesyncMode, seed: u64) -> Vec<ImuSample> {
    let times: Vec<Timestamp> = stream.iter().map(|s| s.t).collect();
    desync_plan(&times, offset_ms, mode, seed)
        .into_iter()
        .map(|(i, t)| ImuSample { t, ..stream[i] })
        .collect()
}

/// Indices surviving independent drops at `rate`, in order. One draw is
/// consumed per element. With `protect_ends` the first and last elements
/// always survive.
pub fn surviving_indices(n: usize, rate: f64, seed: u64, stream: u64, protect_ends: bool) -> Vec<usize> {
    let mut rng = SeededRng::new(seed, stream);
    (0..n)
        .filter(|&i| {
            let dropped = rng.uniform() < rate;
            !dropped || (protect_ends && (i == 0 || i + 1 == n))
        })
        .collect()
}

pub fn drop_imu(stream: &[ImuSample], rate: f64, seed: u64) -> Vec<ImuSample> {
    surviving_indices(stream.len(), rate, seed, STREAM_IMU_DROP, false)
        .into_iter()
        .map(|i| stream[i])
        .collect()
}

/// Camera frames kept out of `n`, never dropping the first or last.
pub fn drop_frames(n: usize, rate: f64, seed: u64) -> Vec<usize> {
    surviving_indices(n, rate, seed, STREAM_CAMERA_DROP, true)
}
