//! Bias feedback: joint solves over consecutive windows of intervals, with
//! stereo relative poses as the reference.

use std::path::Path;

use vio_geom::imu::slice_interval;
use vio_geom::io::config::RunConfig;
use vio_geom::io::labels::{write_bias_timeline, BiasRecord};
use vio_geom::io::trajectory::RelativeRecord;
use vio_geom::io::SequenceManifest;
use vio_geom::status::{update_status_window, StatusPair};
use vio_geom::{ImuSample, ImuStatus};

use super::files;
use super::kinematics::{camera_to_body_relative, FrameState};
use crate::outcome::{AtStage, Report, StageResult};

const STAGE: &str = "update-bias";

pub struct UpdateBiasOutput {
    pub timeline: Vec<BiasRecord>,
    pub report: Report,
}

/// One record per window of `cfg.status.window` intervals. A window's
/// solve is accepted when it lowered the objective and the result stays
/// within the configured bias bounds; otherwise the prior carries over.
pub fn run(
    m: &SequenceManifest,
    cfg: &RunConfig,
    states: &[FrameState],
    stereo: &[RelativeRecord],
    out: &Path,
) -> StageResult<UpdateBiasOutput> {
    let n = stereo.len();
    let gravity = cfg.imu.gravity();
    let mut prior = ImuStatus::zero();
    let mut timeline = Vec::new();
    let mut report = Report::default();
    let (mut accepted, mut skipped) = (0usize, 0usize);
    let mut start = 0;
    while start < n {
        let end = (start + cfg.status.window).min(n);
        let slices: Vec<(usize, Vec<ImuSample>)> = (start..end)
            .filter(|&i| stereo[i].valid)
            .filter_map(|i| slice_interval(&m.imu, stereo[i].t0, stereo[i].t1).ok().map(|s| (i, s)))
            .filter(|(_, s)| s.len() >= 2)
            .collect();
        let pairs: Vec<StatusPair<'_>> = slices
            .iter()
            .map(|(i, s)| StatusPair {
                samples: s,
                reference: camera_to_body_relative(&stereo[*i].xi.exp(), &m.rig.cam_to_imu),
                kinematics: states[*i].kinematics(gravity),
            })
            .collect();
        let mut ok = false;
        if pairs.is_empty() {
            skipped += 1;
        } else {
            match update_status_window(&pairs, &prior, &cfg.imu.noise, &cfg.status.params) {
                Ok(o) => {
                    let finite = o.status.ba.iter().chain(o.status.bg.iter()).all(|v| v.is_finite());
                    let improved = o.converged || o.final_cost < o.initial_cost;
                    let bounded = o.status.validate(cfg.imu.max_accel_bias, cfg.imu.max_gyro_bias).is_ok();
                    if finite && improved && bounded {
                        prior = o.status;
                        ok = true;
                    } else {
                        report.notes.push(format!(
                            "window at interval {start}: solve rejected (improved {improved}, within bounds {bounded})"
                        ));
                    }
                }
                Err(e) => report.notes.push(format!("window at interval {start}: {e}")),
            }
        }
        accepted += usize::from(ok);
        timeline.push(BiasRecord {
            t0: stereo[start].t0,
            t1: stereo[end - 1].t1,
            accepted: ok,
            status: prior,
        });
        start = end;
    }
    let path = out.join(files::BIAS_TIMELINE);
    write_bias_timeline(&path, &timeline).at(STAGE)?;
    let s = &mut report.summary;
    s.push("intervals", n);
    s.push("windows", timeline.len());
    s.push("accepted", accepted);
    s.push("empty_windows", skipped);
    let fmt = |v: &nalgebra::Vector3<f64>| format!("{},{},{}", v.x, v.y, v.z);
    s.push("final_ba", fmt(&prior.ba));
    s.push("final_bg", fmt(&prior.bg));
    s.push("bias_timeline", path.display());
    Ok(UpdateBiasOutput { timeline, report })
}
