//! Synthetic ground truth: an analytic body trajectory, a landmark shell,
//! z-buffered depth renders and a matching IMU stream.
//!
//! The body frame is x forward, y left, z up and the world is z up. The
//! path is a horizontal circle (or a straight line) traversed at speed
//! `ṡ(t) = v (1 − e^{−t/τ})`, with the yaw following the heading, a small
//! attitude wobble and a vertical sine on top. Every derivative is
//! analytic, so the IMU stream is exact up to the injected bias and noise.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuNoiseModel, ImuSample, ImuStatus, Timestamp};
use crate::io::config::RunConfig;
use crate::io::euroc::{write_euroc, EurocState};
use crate::io::image::write_disparity_png16;
use crate::io::kitti::{frame_name, sequence_dir, write_kitti_odometry};
use crate::io::manifest::Layout;
use crate::io::pfm::write_disparity_pfm;
use crate::rng::SeededRng;
use crate::se3::{so3_exp, so3_right_jacobian, RigidTransform, Rotation};
use crate::stereo::{DepthMap, DisparityMap, PixelCoord, StereoRig};

/// Generator stream numbers; distinct from the degradation streams.
pub const STREAM_LANDMARKS: u64 = 16;
pub const STREAM_IMU_NOISE: u64 = 17;
pub const STREAM_ALIGNED_PAIR: u64 = 18;

/// Wall-clock origin written into emitted OXTS timestamps.
pub const DEFAULT_OXTS_EPOCH: &str = "2011-09-30 12:00:00.000000000";
/// Nanosecond origin of emitted EuRoC timestamps.
pub const EUROC_TIME_ORIGIN: i64 = 1_403_636_579_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathShape {
    #[default]
    Circle,
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisparityFormat {
    /// Lossless 32-bit float maps.
    Pfm,
    /// 16-bit fixed point at 1/256 px.
    #[default]
    Png16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub layout: Layout,
    pub path: PathShape,
    /// Circle radius, meters.
    pub radius: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Speed ramp time constant, seconds; 0 starts at cruise speed.
    pub ramp_tau: f64,
    /// Roll and pitch wobble amplitude, radians.
    pub wobble_amplitude: f64,
    pub wobble_frequency: f64,
    /// Vertical sine amplitude, meters.
    pub vertical_amplitude: f64,
    pub vertical_frequency: f64,
    /// Seconds.
    pub duration: f64,
    pub cam_rate: f64,
    pub imu_rate: f64,
    pub width: usize,
    pub height: usize,
    pub landmarks: usize,
    /// Inner and outer radius of the landmark shell around the path center.
    pub shell_radii: [f64; 2],
    /// The first `dynamic_landmarks` landmarks move at `dynamic_velocity`.
    pub dynamic_landmarks: usize,
    pub dynamic_velocity: [f64; 3],
    pub gravity: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    /// Adds white measurement noise from `noise`.
    pub imu_noise: bool,
    /// Lets the biases random-walk with the densities in `noise`.
    pub bias_walk: bool,
    pub noise: ImuNoiseModel,
    pub seed: u64,
    pub disparity_format: DisparityFormat,
    pub oxts_epoch: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            layout: Layout::Kitti,
            path: PathShape::Circle,
            radius: 25.0,
            speed: 4.0,
            ramp_tau: 0.0,
            wobble_amplitude: 0.01,
            wobble_frequency: 0.2,
            vertical_amplitude: 0.2,
            vertical_frequency: 0.05,
            duration: 60.0,
            cam_rate: 10.0,
            imu_rate: 200.0,
            width: 1241,
            height: 376,
            landmarks: 20_000,
            shell_radii: [40.0, 45.0],
            dynamic_landmarks: 0,
            dynamic_velocity: [1.0, 0.0, 0.0],
            gravity: [0.0, 0.0, -9.81],
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            imu_noise: false,
            bias_walk: false,
            noise: ImuNoiseModel::default(),
            seed: 7,
            disparity_format: DisparityFormat::Png16,
            oxts_epoch: DEFAULT_OXTS_EPOCH.into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.cam_rate > 0.0 && self.imu_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be non-negative");
        }
        if !(self.radius > 0.0 && self.speed >= 0.0 && self.ramp_tau >= 0.0) {
            return bad("radius must be positive, speed and ramp_tau non-negative");
        }
        let [r0, r1] = self.shell_radii;
        if !(r0 >= 0.0 && r0 <= r1) {
            return bad("shell_radii must satisfy 0 <= inner <= outer");
        }
        if self.dynamic_landmarks > self.landmarks {
            return bad("dynamic_landmarks exceeds landmarks");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        self.noise.validate()
    }

    pub fn true_bias(&self) -> ImuStatus {
        ImuStatus::new(Vector3::from(self.accel_bias), Vector3::from(self.gyro_bias))
    }
}

/// Analytic body state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyState {
    /// World-from-body.
    pub pose: RigidTransform,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    /// World frame, m/s².
    pub acceleration: Vector3<f64>,
    /// Body frame, rad/s.
    pub angular_rate: Vector3<f64>,
    /// Body frame, `Rᵀ(a − g)`.
    pub specific_force: Vector3<f64>,
}

/// One z-buffered render.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub depth: DepthMap,
    pub disparity: DisparityMap,
    /// Landmark index seen at each pixel.
    pub landmark_ids: Vec<Option<u32>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub config: SynthConfig,
    pub rig: StereoRig,
    /// World positions at t = 0.
    pub landmarks: Vec<Vector3<f64>>,
    pub gravity: Vector3<f64>,
}

fn period_ns(rate: f64) -> i64 {
    (1e9 / rate).round() as i64
}

impl SyntheticScene {
    pub fn new(config: SynthConfig, rig: StereoRig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed, STREAM_LANDMARKS);
        let center = match config.path {
            PathShape::Circle => Vector3::zeros(),
            PathShape::Line => Vector3::new(0.5 * config.speed * config.duration, 0.0, 0.0),
        };
        let [r0, r1] = config.shell_radii;
        let landmarks = (0..config.landmarks)
            .map(|_| {
                let dir = rng.unit_vector();
                center + dir * rng.uniform_range(r0, r1)
            })
            .collect();
        Ok(SyntheticScene {
            gravity: Vector3::from(config.gravity),
            config,
            rig,
            landmarks,
        })
    }

    /// Arc length and its first two derivatives.
    fn arc(&self, t: f64) -> (f64, f64, f64) {
        let (v, tau) = (self.config.speed, self.config.ramp_tau);
        if tau == 0.0 {
            return (v * t, v, 0.0);
        }
        let e = (-t / tau).exp();
        (v * (t - tau * (1.0 - e)), v * (1.0 - e), v / tau * e)
    }

    /// Wobble rotation vector and its derivative.
    fn wobble(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (a, w) = (self.config.wobble_amplitude, TAU * self.config.wobble_frequency);
        let (w2, ph) = (1.7 * w, 0.5);
        (
            Vector3::new(a * (w * t).sin(), a * ((w2 * t + ph).sin() - ph.sin()), 0.0),
            Vector3::new(a * w * (w * t).cos(), a * w2 * (w2 * t + ph).cos(), 0.0),
        )
    }

    pub fn body_state(&self, t: f64) -> Result<BodyState> {
        if !(0.0..=self.config.duration + 1e-9).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.config.duration
            )));
        }
        let (s, sd, sdd) = self.arc(t);
        let (ah, wh) = (self.config.vertical_amplitude, TAU * self.config.vertical_frequency);
        let (h, hd, hdd) = (ah * (wh * t).sin(), ah * wh * (wh * t).cos(), -ah * wh * wh * (wh * t).sin());
        let (pos, vel, acc, yaw, yaw_rate) = match self.config.path {
            PathShape::Circle => {
                let r = self.config.radius;
                let th = s / r;
                let (st, ct) = th.sin_cos();
                let tangent = Vector3::new(-st, ct, 0.0);
                let radial = Vector3::new(ct, st, 0.0);
                (
                    radial * r + Vector3::new(0.0, 0.0, h),
                    tangent * sd + Vector3::new(0.0, 0.0, hd),
                    tangent * sdd - radial * (sd * sd / r) + Vector3::new(0.0, 0.0, hdd),
                    th + std::f64::consts::FRAC_PI_2,
                    sd / r,
                )
            }
            PathShape::Line => (
                Vector3::new(s, 0.0, h),
                Vector3::new(sd, 0.0, hd),
                Vector3::new(sdd, 0.0, hdd),
                0.0,
                0.0,
            ),
        };
        let (phi, phid) = self.wobble(t);
        let ew = so3_exp(&phi);
        let rot = Rotation::about_z(yaw) * ew;
        let angular_rate = ew.inverse().rotate(&Vector3::z()) * yaw_rate + so3_right_jacobian(&phi) * phid;
        let specific_force = rot.inverse().rotate(&(acc - self.gravity));
        Ok(BodyState {
            pose: RigidTransform::new(rot, pos),
            velocity: vel,
            acceleration: acc,
            angular_rate,
            specific_force,
        })
    }

    /// World-from-left-camera.
    pub fn camera_pose(&self, t: f64) -> Result<RigidTransform> {
        Ok(self.body_state(t)?.pose * self.rig.cam_to_imu)
    }

    pub fn landmark_at(&self, i: usize, t: f64) -> Vector3<f64> {
        if i < self.config.dynamic_landmarks {
            self.landmarks[i] + Vector3::from(self.config.dynamic_velocity) * t
        } else {
            self.landmarks[i]
        }
    }

    pub fn frame_times(&self) -> Vec<Timestamp> {
        ticks(self.config.cam_rate, self.config.duration)
    }

    pub fn imu_times(&self) -> Vec<Timestamp> {
        ticks(self.config.imu_rate, self.config.duration)
    }

    pub fn render_frame(&self, t: f64) -> Result<RenderedFrame> {
        let cam = self.camera_pose(t)?.inverse();
        let landmarks: Vec<Vector3<f64>> = (0..self.landmarks.len()).map(|i| self.landmark_at(i, t)).collect();
        Ok(render_points(&landmarks, &cam, &self.rig, self.config.width, self.config.height))
    }

    /// Gyro and accelerometer samples on the IMU grid.
    pub fn synthesize_imu(&self) -> Result<Vec<ImuSample>> {
        let cfg = &self.config;
        let mut rng = SeededRng::new(cfg.seed, STREAM_IMU_NOISE);
        let n = &cfg.noise;
        let (sg, sa) = (n.gyro_noise_density * cfg.imu_rate.sqrt(), n.accel_noise_density * cfg.imu_rate.sqrt());
        let dt_sqrt = (1.0 / cfg.imu_rate).sqrt();
        let mut bias = cfg.true_bias();
        self.imu_times()
            .into_iter()
            .map(|t| {
                let st = self.body_state(t.as_secs_f64())?;
                let mut gyro = st.angular_rate + bias.bg;
                let mut accel = st.specific_force + bias.ba;
                if cfg.imu_noise {
                    gyro += rng.normal_vector() * sg;
                    accel += rng.normal_vector() * sa;
                }
                if cfg.bias_walk {
                    bias.bg += rng.normal_vector() * (n.gyro_random_walk * dt_sqrt);
                    bias.ba += rng.normal_vector() * (n.accel_random_walk * dt_sqrt);
                }
                Ok(ImuSample::new(t, gyro, accel))
            })
            .collect()
    }
}

/// `0, 1/rate, …` up to and including `duration`, in whole nanoseconds.
fn ticks(rate: f64, duration: f64) -> Vec<Timestamp> {
    let p = period_ns(rate);
    let end = (duration * 1e9).round() as i64;
    (0..=end / p).map(|k| Timestamp(k * p)).collect()
}

/// Projects world points through `world_to_cam`, keeping the nearest point
/// per rounded pixel. Depth is the exact camera-frame z of the point.
pub fn render_points(
    points: &[Vector3<f64>],
    world_to_cam: &RigidTransform,
    rig: &StereoRig,
    width: usize,
    height: usize,
) -> RenderedFrame {
    let k = rig.intrinsics;
    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut ids = vec![None; width * height];
    for (i, p) in points.iter().enumerate() {
        let c = world_to_cam.transform_point(p);
        if !(c.z > 0.0) {
            continue;
        }
        let u = (k.fx * c.x / c.z + k.cx).round();
        let v = (k.fy * c.y / c.z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
            continue;
        }
        let idx = v as usize * width + u as usize;
        if c.z < zbuf[idx] {
            zbuf[idx] = c.z;
            ids[idx] = Some(i as u32);
        }
    }
    let mut depth = DepthMap::new(width, height);
    let mut disparity = DisparityMap::new(width, height);
    for (idx, z) in zbuf.iter().enumerate() {
        if z.is_finite() {
            let (x, y) = (idx % width, idx / width);
            depth.set(x, y, *z);
            disparity.set(x, y, k.fx * rig.baseline / z);
        }
    }
    RenderedFrame {
        depth,
        disparity,
        landmark_ids: ids,
    }
}

/// Two depth maps of a camera moving `dx` meters along its x axis, built so
/// that every static point lands exactly on integer pixels in both frames.
#[derive(Clone, Debug)]
pub struct AlignedPair {
    pub prev: DepthMap,
    pub cur: DepthMap,
    /// Maps current-frame points into the previous frame.
    pub truth: RigidTransform,
    /// Previous-frame pixel of each static point with its exact image
    /// displacement (current minus previous projection).
    pub static_flow: Vec<(PixelCoord, [f64; 2])>,
    /// Previous-frame pixels covered by the moving patch.
    pub dynamic_footprint: Vec<PixelCoord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignedPairSpec {
    pub width: usize,
    pub height: usize,
    pub dx: f64,
    pub static_points: usize,
    /// Minimum 3D spacing between static points, meters.
    pub min_separation: f64,
    /// Side of the moving square patch in pixels; 0 disables it.
    pub patch_pixels: usize,
    pub patch_depth: f64,
    /// Motion of the patch along the optical axis, meters.
    pub patch_advance: f64,
    pub seed: u64,
}

impl Default for AlignedPairSpec {
    fn default() -> Self {
        AlignedPairSpec {
            width: 1241,
            height: 376,
            dx: 0.1,
            static_points: 900,
            min_separation: 0.8,
            patch_pixels: 10,
            patch_depth: 8.0,
            patch_advance: 2.0,
            seed: 1,
        }
    }
}

/// Builds an [`AlignedPair`]. Static depths are `fx·dx/k` for integer
/// shifts `k` in `1..=8`, so each point moves exactly `k` pixels.
pub fn pixel_aligned_pair(rig: &StereoRig, spec: &AlignedPairSpec) -> Result<AlignedPair> {
    let k = rig.intrinsics;
    let (w, h) = (spec.width, spec.height);
    if !(spec.dx > 0.0) || w < 16 || h < 16 {
        return Err(Error::InvalidArgument("aligned pair needs dx > 0 and at least 16x16 pixels".into()));
    }
    let mut rng = SeededRng::new(spec.seed, STREAM_ALIGNED_PAIR);
    let shift = Vector3::new(spec.dx, 0.0, 0.0);
    let unproject = |u: usize, v: usize, z: f64| {
        Vector3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z)
    };
    let mut prev = DepthMap::new(w, h);
    let mut cur = DepthMap::new(w, h);

    // Moving patch, centered in the image.
    let mut patch_prev = Vec::new();
    let mut patch_cur_pixels = Vec::new();
    let mut dynamic_footprint = Vec::new();
    let (pu0, pv0) = ((w - spec.patch_pixels) / 2, (h - spec.patch_pixels) / 2);
    for v in pv0..pv0 + spec.patch_pixels {
        for u in pu0..pu0 + spec.patch_pixels {
            let p = unproject(u, v, spec.patch_depth);
            prev.set(u, v, p.z);
            dynamic_footprint.push(PixelCoord::new(u as u32, v as u32));
            patch_prev.push(p);
            let q = p - shift + Vector3::new(0.0, 0.0, spec.patch_advance);
            let cu = (k.fx * q.x / q.z + k.cx).round();
            let cv = (k.fy * q.y / q.z + k.cy).round();
            if cu >= 0.0 && cv >= 0.0 && (cu as usize) < w && (cv as usize) < h {
                let idx = (cu as usize, cv as usize);
                if cur.get(idx.0, idx.1).is_none_or(|z| q.z < z) {
                    cur.set(idx.0, idx.1, q.z);
                }
                patch_cur_pixels.push(idx);
            }
        }
    }
    let patch_cur: Vec<Vector3<f64>> = patch_prev
        .iter()
        .map(|p| p - shift + Vector3::new(0.0, 0.0, spec.patch_advance))
        .collect();

    let mut placed: Vec<Vector3<f64>> = Vec::new();
    let mut static_flow = Vec::new();
    let min_sep2 = spec.min_separation * spec.min_separation;
    let clearance2 = 1.5f64 * 1.5;
    let mut attempts = 0usize;
    while placed.len() < spec.static_points && attempts < spec.static_points * 200 {
        attempts += 1;
        let shift_px = 1 + (rng.next_u64() % 8) as usize;
        let z = k.fx * spec.dx / shift_px as f64;
        let u = shift_px + (rng.next_u64() % (w - shift_px) as u64) as usize;
        let v = (rng.next_u64() % h as u64) as usize;
        let uc = u - shift_px;
        if prev.get(u, v).is_some() || cur.get(uc, v).is_some() {
            continue;
        }
        let p = unproject(u, v, z);
        if placed.iter().any(|q| (q - p).norm_squared() < min_sep2) {
            continue;
        }
        if patch_prev.iter().chain(&patch_cur).any(|q| (q - p).norm_squared() < clearance2)
            || patch_prev.iter().chain(&patch_cur).any(|q| (q - (p - shift)).norm_squared() < clearance2)
        {
            continue;
        }
        prev.set(u, v, z);
        cur.set(uc, v, z);
        placed.push(p);
        static_flow.push((PixelCoord::new(u as u32, v as u32), [-(shift_px as f64), 0.0]));
    }
    if placed.len() < spec.static_points {
        return Err(Error::Degenerate(format!(
            "placed only {} of {} static points",
            placed.len(),
            spec.static_points
        )));
    }
    Ok(AlignedPair {
        prev,
        cur,
        truth: RigidTransform::from_translation(shift),
        static_flow,
        dynamic_footprint,
    })
}

/// What [`emit_dataset`] wrote.
#[derive(Clone, Debug)]
pub struct EmitSummary {
    pub root: PathBuf,
    pub layout: Layout,
    pub frames: usize,
    pub imu_samples: usize,
    /// Configuration matching the emitted data (rig, gravity, sequence).
    pub config_path: PathBuf,
    /// Ground-truth left-camera poses in the layout's world frame.
    pub camera_poses: Vec<RigidTransform>,
    pub imu: Vec<ImuSample>,
}

fn write_disparity(dir: &Path, stem: &str, format: DisparityFormat, map: &DisparityMap) -> Result<()> {
    match format {
        DisparityFormat::Pfm => write_disparity_pfm(&dir.join(format!("{stem}.pfm")), map),
        DisparityFormat::Png16 => write_disparity_png16(&dir.join(format!("{stem}.png")), map),
    }
}

pub const EMITTED_CONFIG: &str = "config.toml";

/// Writes the scene as an on-disk dataset plus a `config.toml` that lets
/// the pipeline read it back with the right rig and gravity.
///
/// The KITTI layout expresses poses relative to the first camera, as the
/// odometry ground truth does; gravity in the emitted configuration is
/// rotated accordingly. The EuRoC layout keeps the z-up world.
pub fn emit_dataset(scene: &SyntheticScene, base: &RunConfig, root: &Path) -> Result<EmitSummary> {
    let cfg = &scene.config;
    let times = scene.frame_times();
    let imu = scene.synthesize_imu()?;
    let world_cams: Vec<RigidTransform> = times
        .iter()
        .map(|t| scene.camera_pose(t.as_secs_f64()))
        .collect::<Result<_>>()?;
    let frames: Vec<RenderedFrame> = times
        .par_iter()
        .map(|t| scene.render_frame(t.as_secs_f64()))
        .collect::<Result<_>>()?;

    let mut out_cfg = base.clone();
    out_cfg.synth = cfg.clone();
    out_cfg.rig = crate::io::config::RigConfig::from_rig(&scene.rig);

    let camera_poses = match cfg.layout {
        Layout::Kitti => {
            let first_inv = world_cams.first().map(|p| p.inverse()).unwrap_or_else(RigidTransform::identity);
            let rel: Vec<RigidTransform> = world_cams.iter().map(|p| first_inv * *p).collect();
            let seq = base.kitti.sequence.clone();
            write_kitti_odometry(root, &seq, &times, &scene.rig, Some(&rel), Some((&imu, &cfg.oxts_epoch)))?;
            let disp_dir = sequence_dir(root, &seq).join("disparity");
            for (i, f) in frames.iter().enumerate() {
                write_disparity(&disp_dir, &frame_name(i), cfg.disparity_format, &f.disparity)?;
            }
            out_cfg.imu.gravity = first_inv.rotation.rotate(&scene.gravity).into();
            out_cfg.kitti.oxts_epoch = cfg.oxts_epoch.clone();
            out_cfg.kitti.raw_drives.clear();
            rel
        }
        Layout::Euroc => {
            let shift = |t: Timestamp| Timestamp(t.0 + EUROC_TIME_ORIGIN);
            let frame_times: Vec<Timestamp> = times.iter().map(|t| shift(*t)).collect();
            let shifted_imu: Vec<ImuSample> = imu.iter().map(|s| ImuSample { t: shift(s.t), ..*s }).collect();
            let bias = cfg.true_bias();
            let states: Vec<EurocState> = scene
                .imu_times()
                .iter()
                .map(|t| {
                    let st = scene.body_state(t.as_secs_f64())?;
                    Ok(EurocState {
                        t: shift(*t),
                        pose: st.pose,
                        velocity: st.velocity,
                        gyro_bias: bias.bg,
                        accel_bias: bias.ba,
                    })
                })
                .collect::<Result<_>>()?;
            write_euroc(root, &frame_times, &shifted_imu, Some(&states))?;
            let disp_dir = root.join("mav0").join("disparity");
            for (t, f) in frame_times.iter().zip(&frames) {
                write_disparity(&disp_dir, &t.0.to_string(), cfg.disparity_format, &f.disparity)?;
            }
            out_cfg.imu.gravity = cfg.gravity;
            world_cams
        }
    };
    let config_path = root.join(EMITTED_CONFIG);
    let text = out_cfg.echo();
    crate::io::write_with(&config_path, |w| std::io::Write::write_all(w, text.as_bytes()))?;
    Ok(EmitSummary {
        root: root.to_path_buf(),
        layout: cfg.layout,
        frames: times.len(),
        imu_samples: imu.len(),
        config_path,
        camera_poses,
        imu,
    })
}
