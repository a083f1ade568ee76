//! Deterministic inputs shared by the benchmarks.

use nalgebra::Vector3;
use vio_geom::io::config::RigConfig;
use vio_geom::rng::SeededRng;
use vio_geom::synth::{SynthConfig, SyntheticScene};
use vio_geom::{ImuSample, PointCloud, RigidTransform, StereoRig};

pub fn rig() -> StereoRig {
    RigConfig::default().to_rig().expect("default rig is valid")
}

/// Gaussian clusters scattered through a 10 m box.
pub fn cluster_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = SeededRng::new(seed, 0);
    let centers: Vec<Vector3<f64>> = (0..25)
        .map(|_| Vector3::new(rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0)))
        .collect();
    PointCloud::from_points((0..n).map(|i| centers[i % 25] + rng.normal_vector() * 0.15).collect())
}

/// A cloud and a copy moved by a small known motion.
pub fn registration_pair(n: usize) -> (PointCloud, PointCloud, RigidTransform) {
    let prev = cluster_cloud(n, 3);
    let truth = RigidTransform::new(
        vio_geom::se3::so3_exp(&Vector3::new(0.02, -0.05, 0.03)),
        Vector3::new(0.3, -0.1, 0.2),
    );
    let cur = prev.transformed(&truth.inverse());
    (prev, cur, truth)
}

/// Noiseless IMU stream from the default circular scene.
pub fn imu_stream(seconds: f64) -> Vec<ImuSample> {
    let cfg = SynthConfig {
        duration: seconds,
        landmarks: 0,
        ..SynthConfig::default()
    };
    SyntheticScene::new(cfg, rig())
        .and_then(|s| s.synthesize_imu())
        .expect("synthetic IMU")
}

pub fn scene(seconds: f64, landmarks: usize) -> SyntheticScene {
    let cfg = SynthConfig {
        duration: seconds,
        landmarks,
        ..SynthConfig::default()
    };
    SyntheticScene::new(cfg, rig()).expect("synthetic scene")
}
