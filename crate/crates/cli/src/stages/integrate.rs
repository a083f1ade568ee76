//! Fused trajectory: stereo where registration succeeded, bias-corrected
//! IMU where it did not, and the previous motion where neither is usable.

use std::path::Path;

use rayon::prelude::*;
use vio_geom::eval::{integrate_se3_chain, Trajectory};
use vio_geom::io::config::RunConfig;
use vio_geom::io::labels::BiasRecord;
use vio_geom::io::trajectory::{write_relatives, write_timestamped_poses, RelativeRecord};
use vio_geom::io::SequenceManifest;
use vio_geom::se3::Se3Tangent;

use super::kinematics::{origin, FrameState};
use super::preintegrate::imu_interval;
use super::{files, scale_tangent};
use crate::outcome::{AtStage, Report, StageResult};

const STAGE: &str = "integrate";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Stereo,
    Imu,
    Hold,
}

pub struct IntegrateOutput {
    pub trajectory: Trajectory,
    pub sources: Vec<Source>,
    pub report: Report,
}

pub fn run(
    m: &SequenceManifest,
    cfg: &RunConfig,
    states: Option<&[FrameState]>,
    stereo: &[RelativeRecord],
    bias: &[BiasRecord],
    out: &Path,
) -> StageResult<IntegrateOutput> {
    let n = stereo.len();
    let imu: Vec<Option<Se3Tangent>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if stereo[i].valid {
                return None;
            }
            let states = states?;
            imu_interval(m, cfg, states, bias, i).ok().map(|(_, rel)| rel.log())
        })
        .collect();

    let mut chosen = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut last: Option<(Se3Tangent, f64)> = None;
    for (i, r) in stereo.iter().enumerate() {
        let dt = r.t1.seconds_since(r.t0);
        let (xi, src) = if r.valid {
            (r.xi, Source::Stereo)
        } else if let Some(xi) = imu[i] {
            (xi, Source::Imu)
        } else {
            let held = last.map(|(xi, d)| scale_tangent(&xi, dt / d)).unwrap_or_else(Se3Tangent::zero);
            (held, Source::Hold)
        };
        if src != Source::Hold {
            last = Some((xi, dt));
        }
        chosen.push(RelativeRecord {
            t0: r.t0,
            t1: r.t1,
            valid: src == Source::Stereo,
            xi,
            residual: r.residual,
        });
        sources.push(src);
    }

    let steps: Vec<_> = chosen.iter().map(|r| (r.t1, r.xi)).collect();
    let trajectory = match m.frames.first() {
        Some(f) => integrate_se3_chain(f.t, &steps, &origin(m)),
        None => Trajectory::new(Vec::new()),
    }
    .at(STAGE)?;
    let traj_path = out.join(files::TRAJECTORY);
    let vio_path = out.join(files::VIO_SE3);
    write_timestamped_poses(&traj_path, &trajectory).at(STAGE)?;
    write_relatives(&vio_path, &chosen).at(STAGE)?;

    let count = |s: Source| sources.iter().filter(|x| **x == s).count();
    let mut report = Report::default();
    let s = &mut report.summary;
    s.push("intervals", n);
    s.push("from_stereo", count(Source::Stereo));
    s.push("from_imu", count(Source::Imu));
    s.push("held", count(Source::Hold));
    s.push("trajectory", traj_path.display());
    s.push("vio_se3", vio_path.display());
    Ok(IntegrateOutput {
        trajectory,
        sources,
        report,
    })
}
