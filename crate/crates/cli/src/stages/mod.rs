//! Pipeline stages. Each stage reads its inputs, writes its label files
//! into an output directory and returns a [`Report`](crate::outcome::Report).

pub mod evaluate;
pub mod integrate;
pub mod kinematics;
pub mod preintegrate;
pub mod supervise;
pub mod update_bias;

use vio_geom::se3::Se3Tangent;

/// File names shared between stages.
pub mod files {
    pub const STEREO_SE3: &str = "stereo_se3.txt";
    pub const IMU_SE3: &str = "imu_se3.txt";
    pub const IMU_COV: &str = "imu_cov.txt";
    pub const BIAS_TIMELINE: &str = "bias_timeline.txt";
    pub const VIO_SE3: &str = "vio_se3.txt";
    pub const TRAJECTORY: &str = "trajectory.txt";
    pub const GROUND_TRUTH: &str = "ground_truth.txt";
    pub const REPORT: &str = "report.txt";
    pub const METRICS: &str = "metrics.txt";
    pub const FLOW_DIR: &str = "flow";
    pub const FLOW3D_DIR: &str = "flow3d";
}

/// `ξ · s`, used to stretch a motion estimate over an interval of another
/// length.
pub fn scale_tangent(xi: &Se3Tangent, s: f64) -> Se3Tangent {
    Se3Tangent::from_array(xi.to_array().map(|v| v * s))
}

/// Failure share check against `limit`; `None` when within bounds.
pub fn failure_excess(what: &str, failed: usize, total: usize, limit: f64) -> Option<String> {
    (total > 0 && failed as f64 / total as f64 > limit)
        .then(|| format!("{failed} of {total} {what} failed (limit {limit})"))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
