//! IMU relative poses per camera interval.

use std::path::Path;

use rayon::prelude::*;
use vio_geom::imu::slice_interval;
use vio_geom::io::config::RunConfig;
use vio_geom::io::labels::{bias_at, write_covariances, BiasRecord, CovarianceRecord};
use vio_geom::io::trajectory::{write_relatives, RelativeRecord};
use vio_geom::io::SequenceManifest;
use vio_geom::preint::{delta_to_relative_transform, preintegrate};
use vio_geom::se3::Se3Tangent;
use vio_geom::{PreintegratedDelta, Result, RigidTransform};

use super::kinematics::{body_to_camera_relative, FrameState};
use super::{failure_excess, files};
use crate::outcome::{AtStage, Report, StageResult};

const STAGE: &str = "preintegrate";

/// Preintegrates interval `i` with the bias in force at its start and
/// returns the delta and the relative camera motion.
pub fn imu_interval(
    m: &SequenceManifest,
    cfg: &RunConfig,
    states: &[FrameState],
    bias: &[BiasRecord],
    i: usize,
) -> Result<(PreintegratedDelta, RigidTransform)> {
    let (t0, t1) = (m.frames[i].t, m.frames[i + 1].t);
    let samples = slice_interval(&m.imu, t0, t1)?;
    let delta = preintegrate(&samples, &bias_at(bias, t0), &cfg.imu.noise)?;
    let body_rel = delta_to_relative_transform(&delta, &states[i].kinematics(cfg.imu.gravity()));
    Ok((delta, body_to_camera_relative(&body_rel, &m.rig.cam_to_imu)))
}

pub struct PreintegrateOutput {
    pub records: Vec<RelativeRecord>,
    pub report: Report,
}

pub fn run(
    m: &SequenceManifest,
    cfg: &RunConfig,
    states: &[FrameState],
    bias: &[BiasRecord],
    out: &Path,
) -> StageResult<PreintegrateOutput> {
    let n = m.frames.len().saturating_sub(1);
    let results: Vec<Result<(PreintegratedDelta, RigidTransform)>> =
        (0..n).into_par_iter().map(|i| imu_interval(m, cfg, states, bias, i)).collect();
    let mut records = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    let mut report = Report::default();
    for (i, r) in results.into_iter().enumerate() {
        let (t0, t1) = (m.frames[i].t, m.frames[i + 1].t);
        match r {
            Ok((delta, rel)) => {
                records.push(RelativeRecord {
                    t0,
                    t1,
                    valid: true,
                    xi: rel.log(),
                    residual: delta.covariance.trace(),
                });
                covs.push(CovarianceRecord {
                    t0,
                    t1,
                    covariance: delta.covariance,
                });
            }
            Err(e) => {
                report.notes.push(format!("interval {i}: {e}"));
                records.push(RelativeRecord {
                    t0,
                    t1,
                    valid: false,
                    xi: Se3Tangent::zero(),
                    residual: f64::NAN,
                });
            }
        }
    }
    let se3_path = out.join(files::IMU_SE3);
    let cov_path = out.join(files::IMU_COV);
    write_relatives(&se3_path, &records).at(STAGE)?;
    write_covariances(&cov_path, &covs).at(STAGE)?;
    let valid = covs.len();
    let s = &mut report.summary;
    s.push("intervals", n);
    s.push("valid", valid);
    s.push("failed", n - valid);
    s.push("imu_samples", m.imu.len());
    s.push("imu_se3", se3_path.display());
    s.push("imu_cov", cov_path.display());
    report
        .exceeded
        .extend(failure_excess("intervals", n - valid, n, cfg.pipeline.max_failure_fraction));
    Ok(PreintegrateOutput { records, report })
}
