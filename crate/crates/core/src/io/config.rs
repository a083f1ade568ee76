//! Run configuration (TOML).
//!
//! Every section and key is optional; missing values take the defaults
//! below and unknown keys are rejected. [`RunConfig::echo`] prints the fully
//! resolved configuration.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::degrade::DegradationSpec;
use crate::error::{Error, Result};
use crate::eval::{LossConfig, KITTI_LENGTHS, KITTI_STRIDE};
use crate::flow::{ProjectionMode, DEFAULT_FILL_RADIUS};
use crate::icp::IcpParams;
use crate::imu::ImuNoiseModel;
use crate::io::read_text;
use crate::preint::DEFAULT_TRUST_REGION;
use crate::se3::RigidTransform;
use crate::status::StatusUpdateParams;
use crate::stereo::{CameraIntrinsics, StereoRig, DEFAULT_DEPTH_BAND};
use crate::synth::SynthConfig;

/// Camera-to-IMU extrinsic for a forward-looking camera (z forward, x right,
/// y down) on a body with x forward, y left, z up.
pub const DEFAULT_CAM_TO_IMU: [f64; 12] = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters.
    pub baseline: f64,
    /// Row-major `[R|t]` mapping left-camera points into the IMU frame.
    pub cam_to_imu: [f64; 12],
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            fx: 718.856,
            fy: 718.856,
            cx: 607.1928,
            cy: 185.2157,
            baseline: 0.54,
            cam_to_imu: DEFAULT_CAM_TO_IMU,
        }
    }
}

impl RigConfig {
    pub fn cam_to_imu(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major_3x4(&self.cam_to_imu, 1e-6)
            .map_err(|e| Error::Config(format!("rig.cam_to_imu: {e}")))
    }

    pub fn to_rig(&self) -> Result<StereoRig> {
        let k = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)
            .map_err(|e| Error::Config(format!("rig: {e}")))?;
        StereoRig::new(k, self.baseline, self.cam_to_imu()?).map_err(|e| Error::Config(format!("rig: {e}")))
    }

    pub fn from_rig(rig: &StereoRig) -> Self {
        RigConfig {
            fx: rig.intrinsics.fx,
            fy: rig.intrinsics.fy,
            cx: rig.intrinsics.cx,
            cy: rig.intrinsics.cy,
            baseline: rig.baseline,
            cam_to_imu: rig.cam_to_imu.to_row_major_3x4(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoConfig {
    /// Open interval `(d1, d2)` of accepted depths, meters.
    pub depth_band: [f64; 2],
}

impl Default for StereoConfig {
    fn default() -> Self {
        StereoConfig {
            depth_band: [DEFAULT_DEPTH_BAND.0, DEFAULT_DEPTH_BAND.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub mode: ProjectionMode,
    /// Nearest-anchor fill radius for dense flow, pixels.
    pub fill_radius: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            mode: ProjectionMode::Endpoint,
            fill_radius: DEFAULT_FILL_RADIUS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuConfig {
    pub noise: ImuNoiseModel,
    /// World-frame gravity of the ground-truth (or first-camera) frame, m/s².
    pub gravity: [f64; 3],
    /// Sanity bound on the accelerometer bias norm, m/s².
    pub max_accel_bias: f64,
    /// Sanity bound on the gyroscope bias norm, rad/s.
    pub max_gyro_bias: f64,
    pub trust_region: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        ImuConfig {
            noise: ImuNoiseModel::default(),
            gravity: [0.0, 0.0, -9.81],
            max_accel_bias: 1.0,
            max_gyro_bias: 0.2,
            trust_region: DEFAULT_TRUST_REGION,
        }
    }
}

impl ImuConfig {
    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatusConfig {
    pub params: StatusUpdateParams,
    /// Intervals per joint bias solve; 1 solves each interval alone.
    pub window: usize,
}

impl Default for StatusConfig {
    fn default() -> Self {
        StatusConfig {
            params: StatusUpdateParams::default(),
            window: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Segment lengths, meters.
    pub lengths: Vec<f64>,
    /// Start-frame stride; 1 evaluates every frame.
    pub stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            lengths: KITTI_LENGTHS.to_vec(),
            stride: KITTI_STRIDE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicsSource {
    /// Velocity and attitude from ground truth poses.
    #[default]
    GroundTruth,
    /// Velocity and attitude from the chained stereo relative poses.
    Stereo,
}

/// Initial guess for each frame-pair registration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpSeeding {
    /// Every pair starts from the identity; pairs run in parallel.
    Identity,
    /// Each pair starts from the previous estimate scaled by the ratio of
    /// interval lengths; pairs run in order.
    #[default]
    ConstantVelocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kinematics_source: KinematicsSource,
    pub icp_seeding: IcpSeeding,
    /// Flow labels (dense 2D and 3D) are written for every n-th pair; 0
    /// writes none. Full-resolution `.flo` files are large, so long runs
    /// thin them out.
    pub flow_stride: usize,
    /// Commands fail when more than this fraction of intervals failed.
    pub max_failure_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kinematics_source: KinematicsSource::GroundTruth,
            icp_seeding: IcpSeeding::ConstantVelocity,
            flow_stride: 1,
            max_failure_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KittiConfig {
    pub sequence: String,
    /// OXTS directory per odometry sequence; the odometry release does not
    /// say which raw drive a sequence came from. Relative paths resolve
    /// against the dataset root. Without an entry, `sequences/<seq>/oxts`
    /// is used when present.
    pub raw_drives: BTreeMap<String, String>,
    /// OXTS time of the first odometry frame (`YYYY-MM-DD HH:MM:SS.fffffffff`).
    /// Empty means the first OXTS timestamp.
    pub oxts_epoch: String,
}

impl Default for KittiConfig {
    fn default() -> Self {
        KittiConfig {
            sequence: "00".into(),
            raw_drives: BTreeMap::new(),
            oxts_epoch: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rig: RigConfig,
    pub stereo: StereoConfig,
    pub icp: IcpParams,
    pub flow: FlowConfig,
    pub imu: ImuConfig,
    pub status: StatusConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
    pub degradation: DegradationSpec,
    pub kitti: KittiConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |section: &'static str| move |e: Error| Error::Config(format!("{section}: {e}"));
        self.rig.to_rig()?;
        let [d1, d2] = self.stereo.depth_band;
        if d1.is_nan() || d2.is_nan() || d1 < 0.0 || d1 >= d2 {
            return Err(Error::Config(format!(
                "stereo.depth_band: need 0 <= d1 < d2, got ({d1}, {d2})"
            )));
        }
        self.icp.validate().map_err(ctx("icp"))?;
        self.imu.noise.validate().map_err(ctx("imu.noise"))?;
        if !(self.imu.max_accel_bias > 0.0 && self.imu.max_gyro_bias > 0.0 && self.imu.trust_region > 0.0) {
            return Err(Error::Config("imu: bias bounds and trust_region must be positive".into()));
        }
        self.status.params.validate().map_err(ctx("status.params"))?;
        if self.status.window == 0 {
            return Err(Error::Config("status.window must be at least 1".into()));
        }
        self.loss.validate().map_err(ctx("loss"))?;
        if self.eval.stride == 0 || self.eval.lengths.is_empty() || self.eval.lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("eval: stride and lengths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pipeline.max_failure_fraction) {
            return Err(Error::Config("pipeline.max_failure_fraction must lie in [0, 1]".into()));
        }
        self.degradation.validate().map_err(ctx("degradation"))?;
        self.synth.validate().map_err(ctx("synth"))?;
        Ok(())
    }

    /// The resolved configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable as TOML")
    }
}

/// Merges `overlay` into `base`: tables merge key by key, anything else in
/// `overlay` replaces the value in `base`.
fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Loads configuration files in order, later files overriding earlier ones
/// key by key. No files gives the defaults.
pub fn load_layered(paths: &[&Path]) -> Result<RunConfig> {
    let mut merged = toml::Table::new();
    for p in paths {
        let table: toml::Table = read_text(p)?
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?;
        merge_tables(&mut merged, table);
    }
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let cfg: RunConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", names.join(" + "))))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_toml_str(&read_text(path)?).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
