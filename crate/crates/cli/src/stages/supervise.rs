//! Stereo supervision: ICP relative poses plus 3D and 2D flow labels for
//! every consecutive frame pair.

use std::path::Path;

use rayon::prelude::*;
use vio_geom::flow::{compute_3d_flow, project_flow, synthesize_dense_2d_flow_with_radius, View};
use vio_geom::icp::icp_seeded;
use vio_geom::io::config::{IcpSeeding, RunConfig};
use vio_geom::io::flo::write_flo;
use vio_geom::io::image::write_mask_png;
use vio_geom::io::ply::{vertices_of, write_ply};
use vio_geom::io::trajectory::{write_relatives, RelativeRecord};
use vio_geom::io::SequenceManifest;
use vio_geom::se3::Se3Tangent;
use vio_geom::{DepthMap, Error, IcpResult, PointCloud, Result, RigidTransform, StereoRig};

use super::{failure_excess, files, mean, scale_tangent};
use crate::context::load_frame;
use crate::outcome::{AtStage, Report, StageResult};

const STAGE: &str = "supervise";

/// Frame pairs handled per batch; bounds memory on long sequences.
const CHUNK: usize = 32;

pub struct SuperviseOutput {
    pub records: Vec<RelativeRecord>,
    pub report: Report,
}

type Frame = std::result::Result<(DepthMap, PointCloud), String>;

fn register(prev: &Frame, cur: &Frame, cfg: &RunConfig, seed: &RigidTransform) -> Result<IcpResult> {
    match (prev, cur) {
        (Ok((_, p)), Ok((_, c))) => icp_seeded(p, c, &cfg.icp, seed),
        (Err(e), _) | (_, Err(e)) => Err(Error::Format(e.clone())),
    }
}

/// Writes the 3D flow PLY and the left and right dense flow images with
/// their masks. Returns the number of files written.
fn write_flows(
    i: usize,
    prev: &(DepthMap, PointCloud),
    cur: &PointCloud,
    res: &IcpResult,
    rig: &StereoRig,
    cfg: &RunConfig,
    out: &Path,
) -> Result<usize> {
    let (depth, cloud) = prev;
    let name = format!("{i:06}");
    let field = compute_3d_flow(cloud, cur, &res.correspondences)?.with_rejected(cloud, &res.rejected);
    write_ply(&out.join(files::FLOW3D_DIR).join(format!("{name}.ply")), &vertices_of(&field))?;
    for (view, dir) in [(View::Left, "left"), (View::Right, "right")] {
        let sparse = project_flow(&field, depth, rig, view, cfg.flow.mode);
        let dense = synthesize_dense_2d_flow_with_radius(&sparse, cloud, cfg.flow.fill_radius);
        let base = out.join(files::FLOW_DIR).join(dir);
        write_flo(&base.join(format!("{name}.flo")), &dense)?;
        write_mask_png(&base.join(format!("{name}_mask.png")), &dense)?;
    }
    Ok(5)
}

/// Registers every consecutive pair and writes `stereo_se3.txt` plus flow
/// labels into `out`. Per-pair failures are recorded as invalid intervals.
pub fn supervise(m: &SequenceManifest, cfg: &RunConfig, out: &Path) -> StageResult<SuperviseOutput> {
    let n = m.frames.len();
    let pairs = n.saturating_sub(1);
    let band = cfg.stereo.depth_band;
    let mut records = Vec::with_capacity(pairs);
    let mut notes = Vec::new();
    let mut flow_files = 0usize;
    let mut flow_pairs = 0usize;
    let mut points = Vec::new();
    // Last accepted motion and its interval length, for constant-velocity
    // seeding.
    let mut last_motion: Option<(Se3Tangent, f64)> = None;

    let mut start = 0;
    while start < pairs {
        let end = (start + CHUNK).min(pairs);
        let frames: Vec<Frame> = (start..=end)
            .into_par_iter()
            .map(|i| load_frame(&m.frames[i].disparity, &m.rig, band).map_err(|e| e.to_string()))
            .collect();
        points.extend(frames.iter().take(end - start).map(|f| f.as_ref().map_or(0, |f| f.1.len())));
        let dt = |i: usize| m.frames[i + 1].t.seconds_since(m.frames[i].t);

        let results: Vec<Result<IcpResult>> = match cfg.pipeline.icp_seeding {
            IcpSeeding::Identity => (start..end)
                .into_par_iter()
                .map(|i| register(&frames[i - start], &frames[i + 1 - start], cfg, &RigidTransform::identity()))
                .collect(),
            IcpSeeding::ConstantVelocity => (start..end)
                .map(|i| {
                    let seed = last_motion
                        .map(|(xi, d)| scale_tangent(&xi, dt(i) / d).exp())
                        .unwrap_or_else(RigidTransform::identity);
                    let r = register(&frames[i - start], &frames[i + 1 - start], cfg, &seed);
                    if let Some(res) = r.as_ref().ok().filter(|r| r.converged) {
                        last_motion = Some((res.transform.log(), dt(i)));
                    }
                    r
                })
                .collect(),
        };

        for (k, r) in results.iter().enumerate() {
            let i = start + k;
            let (t0, t1) = (m.frames[i].t, m.frames[i + 1].t);
            records.push(match r {
                Ok(res) => {
                    if !res.converged {
                        notes.push(format!("pair {i}: ICP stopped after {} iterations without converging", res.iterations));
                    }
                    RelativeRecord {
                        t0,
                        t1,
                        valid: res.converged,
                        xi: res.transform.log(),
                        residual: res.mean_residual,
                    }
                }
                Err(e) => {
                    notes.push(format!("pair {i}: {e}"));
                    RelativeRecord {
                        t0,
                        t1,
                        valid: false,
                        xi: Se3Tangent::zero(),
                        residual: f64::NAN,
                    }
                }
            });
        }

        let stride = cfg.pipeline.flow_stride;
        let written: Vec<Result<usize>> = (start..end)
            .into_par_iter()
            .filter(|i| stride > 0 && i % stride == 0)
            .filter_map(|i| {
                let res = results[i - start].as_ref().ok()?;
                let prev = frames[i - start].as_ref().ok()?;
                let cur = &frames[i + 1 - start].as_ref().ok()?.1;
                Some(write_flows(i, prev, cur, res, &m.rig, cfg, out))
            })
            .collect();
        for w in written {
            flow_files += w.at(STAGE)?;
            flow_pairs += 1;
        }
        start = end;
    }

    let path = out.join(files::STEREO_SE3);
    write_relatives(&path, &records).at(STAGE)?;
    let valid = records.iter().filter(|r| r.valid).count();
    let residuals = || records.iter().filter(|r| r.valid).map(|r| r.residual);
    let mut report = Report {
        notes,
        ..Report::default()
    };
    let s = &mut report.summary;
    s.push("frames", n);
    s.push("pairs", pairs);
    s.push("valid", valid);
    s.push("failed", pairs - valid);
    s.push("mean_points", mean(points.iter().map(|&p| p as f64)));
    s.push("mean_icp_residual", mean(residuals()));
    s.push("max_icp_residual", residuals().fold(f64::NAN, f64::max));
    s.push("flow_pairs", flow_pairs);
    s.push("flow_files", flow_files);
    s.push("stereo_se3", path.display());
    report
        .exceeded
        .extend(failure_excess("pairs", pairs - valid, pairs, cfg.pipeline.max_failure_fraction));
    Ok(SuperviseOutput { records, report })
}
