//! One function per subcommand, each a thin composition of the stages.

use std::path::{Path, PathBuf};

use vio_geom::flow::epe;
use vio_geom::io::config::{KinematicsSource, RunConfig};
use vio_geom::io::flo::{read_flo, read_flo_with_mask};
use vio_geom::io::kitti::parse_times;
use vio_geom::io::labels::{read_bias_timeline, BiasRecord};
use vio_geom::io::rewrite::degrade_dataset;
use vio_geom::io::trajectory::{read_any_poses, read_relatives, write_timestamped_poses, RelativeRecord};
use vio_geom::synth::{emit_dataset, SyntheticScene};
use vio_geom::{Error, FlowField2D};

use crate::cli::{ConfigAction, DatasetArgs};
use crate::context::Dataset;
use crate::outcome::{AtStage, Report, StageResult};
use crate::stages::kinematics::{check_alignment, frame_states, FrameState};
use crate::stages::{evaluate, files, integrate, preintegrate, supervise, update_bias};

fn open(args: &DatasetArgs, cfg: &RunConfig) -> StageResult<Dataset> {
    Dataset::open(&args.dataset, args.layout.map(Into::into), cfg).at("load dataset")
}

fn labels_dir<'a>(labels: &'a Option<PathBuf>, out: &'a Path) -> &'a Path {
    labels.as_deref().unwrap_or(out)
}

fn read_stereo(dir: &Path, d: &Dataset) -> StageResult<Vec<RelativeRecord>> {
    let records = read_relatives(&dir.join(files::STEREO_SE3)).at("load labels")?;
    check_alignment(&d.manifest, &records, "stereo labels").at("load labels")?;
    Ok(records)
}

fn states(d: &Dataset, cfg: &RunConfig, stereo: Option<&[RelativeRecord]>) -> StageResult<Vec<FrameState>> {
    frame_states(&d.manifest, cfg, stereo).at("kinematics")
}

pub fn synth(cfg: &RunConfig, out: &Path) -> StageResult<Report> {
    let scene = SyntheticScene::new(cfg.synth.clone(), cfg.rig.to_rig().at("synth")?).at("synth")?;
    let e = emit_dataset(&scene, cfg, out).at("synth")?;
    let mut r = Report::default();
    r.summary.push("layout", format!("{:?}", e.layout).to_lowercase());
    r.summary.push("frames", e.frames);
    r.summary.push("imu_samples", e.imu_samples);
    r.summary.push("landmarks", cfg.synth.landmarks);
    r.summary.push("seed", cfg.synth.seed);
    r.summary.push("dataset", out.display());
    r.summary.push("config", e.config_path.display());
    Ok(r)
}

pub fn supervise_cmd(cfg: &RunConfig, args: &DatasetArgs, out: &Path) -> StageResult<Report> {
    let d = open(args, cfg)?;
    Ok(supervise::supervise(&d.manifest, cfg, out)?.report)
}

pub fn preintegrate_cmd(
    cfg: &RunConfig,
    args: &DatasetArgs,
    out: &Path,
    labels: &Option<PathBuf>,
    bias: &Option<PathBuf>,
) -> StageResult<Report> {
    let d = open(args, cfg)?;
    let stereo = match cfg.pipeline.kinematics_source {
        KinematicsSource::Stereo => Some(read_stereo(labels_dir(labels, out), &d)?),
        KinematicsSource::GroundTruth => None,
    };
    let st = states(&d, cfg, stereo.as_deref())?;
    let timeline: Vec<BiasRecord> = match bias {
        Some(p) => read_bias_timeline(p).at("load bias")?,
        None => Vec::new(),
    };
    Ok(preintegrate::run(&d.manifest, cfg, &st, &timeline, out)?.report)
}

pub fn update_bias_cmd(cfg: &RunConfig, args: &DatasetArgs, out: &Path, labels: &Option<PathBuf>) -> StageResult<Report> {
    let d = open(args, cfg)?;
    let stereo = read_stereo(labels_dir(labels, out), &d)?;
    let st = states(&d, cfg, Some(&stereo))?;
    Ok(update_bias::run(&d.manifest, cfg, &st, &stereo, out)?.report)
}

pub fn integrate_cmd(cfg: &RunConfig, args: &DatasetArgs, out: &Path, labels: &Option<PathBuf>) -> StageResult<Report> {
    let d = open(args, cfg)?;
    let dir = labels_dir(labels, out);
    let stereo = read_stereo(dir, &d)?;
    let bias_path = dir.join(files::BIAS_TIMELINE);
    let mut notes = Vec::new();
    let timeline = if bias_path.is_file() {
        read_bias_timeline(&bias_path).at("load bias")?
    } else {
        notes.push(format!("{} not found; IMU fallback uses zero bias", bias_path.display()));
        Vec::new()
    };
    let st = match states(&d, cfg, Some(&stereo)) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("no IMU fallback: {e}"));
            None
        }
    };
    let mut r = integrate::run(&d.manifest, cfg, st.as_deref(), &stereo, &timeline, out)?.report;
    r.notes.extend(notes);
    Ok(r)
}

pub fn eval_cmd(cfg: &RunConfig, est: &Path, gt: &Path, times: &Option<PathBuf>, out: &Path) -> StageResult<Report> {
    let times = match times {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e }).at("load times")?;
            Some(parse_times(&text, p).at("load times")?)
        }
        None => None,
    };
    let est = read_any_poses(est, times.as_deref()).at("load estimate")?;
    let gt = read_any_poses(gt, times.as_deref()).at("load ground truth")?;
    Ok(evaluate::run(&est, &gt, &cfg.eval, out)?.1)
}

pub fn degrade_cmd(cfg: &RunConfig, args: &DatasetArgs, out: &Path) -> StageResult<Report> {
    let layout = match args.layout {
        Some(l) => l.into(),
        None => crate::context::detect_layout(&args.dataset).at("degrade")?,
    };
    let spec = cfg.degradation;
    let rep = degrade_dataset(&args.dataset, out, layout, &cfg.kitti.sequence, &spec, cfg).at("degrade")?;
    let mut r = Report::default();
    let s = &mut r.summary;
    s.push("miscal_deg", spec.miscal_deg);
    s.push("desync_ms", spec.desync_ms);
    s.push("desync_mode", format!("{:?}", spec.desync_mode).to_lowercase());
    s.push("imu_drop_rate", spec.imu_drop_rate);
    s.push("cam_drop_rate", spec.cam_drop_rate);
    s.push("seed", spec.seed.map_or("none".to_string(), |v| v.to_string()));
    s.push("frames_in", rep.frames_in);
    s.push("frames_out", rep.frames_out);
    s.push("imu_in", rep.imu_in);
    s.push("imu_out", rep.imu_out);
    s.push("files_written", rep.files_written);
    s.push("dataset", out.display());
    Ok(r)
}

/// Reads a flow file, restoring its mask from `<stem>_mask.png` when present.
fn read_flow(p: &Path) -> vio_geom::Result<FlowField2D> {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let mask = p.with_file_name(format!("{stem}_mask.png"));
    if mask.is_file() {
        read_flo_with_mask(p, &mask)
    } else {
        read_flo(p)
    }
}

pub fn flow_compare(a: &Path, b: &Path) -> StageResult<Report> {
    let fa = read_flow(a).at("load flow")?;
    let fb = read_flow(b).at("load flow")?;
    let st = epe(&fa, &fb).at("epe")?;
    let mut r = Report::default();
    r.summary.push("width", fa.width());
    r.summary.push("height", fa.height());
    r.summary.push("pixels_compared", st.count);
    r.summary.push("epe_sum", st.sum);
    r.summary.push("epe_mean", st.mean);
    r.notes.push(format!("EPE over {} pixels: mean {:.6} px, sum {:.6} px", st.count, st.mean, st.sum));
    Ok(r)
}

pub fn pipeline(cfg: &RunConfig, args: &DatasetArgs, out: &Path) -> StageResult<Report> {
    let d = open(args, cfg)?;
    let m = &d.manifest;
    let mut report = Report::default();
    report.summary.push("frames", m.frames.len());
    report.summary.push("layout", format!("{:?}", d.layout).to_lowercase());

    let sup = supervise::supervise(m, cfg, out)?;
    report.absorb("supervise", sup.report);
    let stereo = sup.records;

    let st = states(&d, cfg, Some(&stereo));
    let st = match st {
        Ok(s) => Some(s),
        Err(e) => {
            report.notes.push(format!("IMU stages skipped: {e}"));
            None
        }
    };
    let mut timeline = Vec::new();
    if let Some(st) = &st {
        let pre = preintegrate::run(m, cfg, st, &[], out)?;
        report.absorb("preintegrate", pre.report);
        let ub = update_bias::run(m, cfg, st, &stereo, out)?;
        report.absorb("update_bias", ub.report);
        timeline = ub.timeline;
    }
    let int = integrate::run(m, cfg, st.as_deref(), &stereo, &timeline, out)?;
    report.absorb("integrate", int.report);

    match &m.ground_truth {
        Some(_) if int.trajectory.len() < 2 => report
            .notes
            .push(format!("{} fused pose(s); evaluation skipped", int.trajectory.len())),
        Some(gt) => {
            let gt_path = out.join(files::GROUND_TRUTH);
            write_timestamped_poses(&gt_path, &gt.camera_poses).at("eval")?;
            let (_, ev) = evaluate::run(&int.trajectory, &gt.camera_poses, &cfg.eval, out)?;
            report.absorb("eval", ev);
        }
        None => report.notes.push("no ground truth; evaluation skipped".into()),
    }
    Ok(report)
}

pub fn config(cfg: &RunConfig, action: &ConfigAction) -> StageResult<(Report, String)> {
    match action {
        ConfigAction::Echo { .. } => {
            let mut r = Report::default();
            r.notes.push("resolved configuration follows on stdout".into());
            Ok((r, cfg.echo()))
        }
    }
}
