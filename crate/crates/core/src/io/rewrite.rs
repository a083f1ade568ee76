//! Re-emits a dataset on disk with a [`DegradationSpec`] applied.
//!
//! Files are rewritten line by line and per-frame files are copied, so
//! every byte that a degradation does not touch is preserved. With an
//! identity spec the output is a byte-identical copy of the input tree.
//! Injectors run in the fixed order miscalibration, desynchronization,
//! IMU drops, frame drops.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::degrade::{desync_plan, drop_frames, miscalibrate, surviving_indices, DegradationSpec, STREAM_IMU_DROP};
use crate::error::{Error, Result};
use crate::imu::Timestamp;
use crate::io::config::RunConfig;
use crate::io::euroc::mav_dir;
use crate::io::kitti::{frame_name, sequence_dir};
use crate::io::manifest::Layout;
use crate::io::oxts::{parse_datetime, parse_oxts_timestamps};
use crate::io::{read_text, write_with};
use crate::synth::EMITTED_CONFIG;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewriteReport {
    pub frames_in: usize,
    pub frames_out: usize,
    pub imu_in: usize,
    pub imu_out: usize,
    pub files_written: usize,
}

fn copy_file(src: &Path, dst: &Path) -> Result<()> {
    if let Some(d) = dst.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::copy(src, dst).map_err(|e| Error::io(src, e))?;
    Ok(())
}

/// Every file under `root`, relative to it, in sorted order.
fn list_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        let rd = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
            let child = rel.join(entry.file_name());
            if ty.is_dir() {
                stack.push(child);
            } else {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Content lines and the line terminator style, so kept lines are emitted
/// exactly as read.
fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    write_with(path, |w| {
        for l in lines {
            w.write_all(l.as_bytes())?;
        }
        Ok(())
    })
}

/// Old-to-new mapping of a per-frame file stem, if the frame survives.
struct FrameMap {
    keep: Vec<usize>,
}

impl FrameMap {
    fn new_index(&self, old: usize) -> Option<usize> {
        self.keep.binary_search(&old).ok()
    }
}

fn seed_of(spec: &DegradationSpec) -> u64 {
    spec.seed.unwrap_or(0)
}

/// Rewrites the dataset configuration when the extrinsic is perturbed.
fn rewrite_config(src: &Path, dst: &Path, spec: &DegradationSpec, fallback: &RunConfig) -> Result<bool> {
    let src_cfg = src.join(EMITTED_CONFIG);
    if spec.miscal_deg == 0.0 {
        return Ok(false);
    }
    let mut cfg = if src_cfg.exists() {
        crate::io::config::load_run_config(&src_cfg)?
    } else {
        fallback.clone()
    };
    let rig = miscalibrate(&cfg.rig.to_rig()?, spec.miscal_deg, seed_of(spec));
    cfg.rig.cam_to_imu = rig.cam_to_imu.to_row_major_3x4();
    let text = cfg.echo();
    write_with(&dst.join(EMITTED_CONFIG), |w| w.write_all(text.as_bytes()))?;
    Ok(true)
}

/// IMU rows in output order: `(source row, new time)` after desync then
/// drops.
fn imu_plan(times: &[Timestamp], spec: &DegradationSpec) -> Vec<(usize, Timestamp)> {
    let plan = desync_plan(times, spec.desync_ms, spec.desync_mode, seed_of(spec));
    if spec.imu_drop_rate == 0.0 {
        return plan;
    }
    surviving_indices(plan.len(), spec.imu_drop_rate, seed_of(spec), STREAM_IMU_DROP, false)
        .into_iter()
        .map(|i| plan[i])
        .collect()
}

/// Applies `spec` to the dataset at `src`, writing the result to `dst`.
/// `fallback` supplies the rig when the dataset carries no configuration.
pub fn degrade_dataset(
    src: &Path,
    dst: &Path,
    layout: Layout,
    sequence: &str,
    spec: &DegradationSpec,
    fallback: &RunConfig,
) -> Result<RewriteReport> {
    spec.validate()?;
    if dst.starts_with(src) {
        return Err(Error::InvalidArgument("output directory must not lie inside the input".into()));
    }
    let mut report = RewriteReport::default();
    let mut handled: BTreeSet<PathBuf> = BTreeSet::new();
    if rewrite_config(src, dst, spec, fallback)? {
        handled.insert(PathBuf::from(EMITTED_CONFIG));
        report.files_written += 1;
    }
    match layout {
        Layout::Kitti => degrade_kitti(src, dst, sequence, spec, &mut handled, &mut report)?,
        Layout::Euroc => degrade_euroc(src, dst, spec, &mut handled, &mut report)?,
    }
    for rel in list_files(src)? {
        if !handled.contains(&rel) {
            copy_file(&src.join(&rel), &dst.join(&rel))?;
            report.files_written += 1;
        }
    }
    Ok(report)
}

fn degrade_kitti(
    src: &Path,
    dst: &Path,
    seq: &str,
    spec: &DegradationSpec,
    handled: &mut BTreeSet<PathBuf>,
    report: &mut RewriteReport,
) -> Result<()> {
    let seq_rel = sequence_dir(Path::new(""), seq);
    let times_rel = seq_rel.join("times.txt");
    let times_text = read_text(&src.join(&times_rel))?;
    let time_lines: Vec<&str> = split_lines(&times_text).into_iter().filter(|l| !l.trim().is_empty()).collect();
    let n = time_lines.len();
    let frames = FrameMap {
        keep: if spec.cam_drop_rate > 0.0 {
            drop_frames(n, spec.cam_drop_rate, seed_of(spec))
        } else {
            (0..n).collect()
        },
    };
    report.frames_in = n;
    report.frames_out = frames.keep.len();
    if frames.keep.len() != n {
        write_lines(&dst.join(&times_rel), frames.keep.iter().map(|&i| time_lines[i]))?;
        handled.insert(times_rel);
        report.files_written += 1;
        let poses_rel = Path::new("poses").join(format!("{seq}.txt"));
        if src.join(&poses_rel).exists() {
            let text = read_text(&src.join(&poses_rel))?;
            let lines: Vec<&str> = split_lines(&text).into_iter().filter(|l| !l.trim().is_empty()).collect();
            if lines.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{}: {} poses for {n} frames",
                    poses_rel.display(),
                    lines.len()
                )));
            }
            write_lines(&dst.join(&poses_rel), frames.keep.iter().map(|&i| lines[i]))?;
            handled.insert(poses_rel);
            report.files_written += 1;
        }
        for sub in ["disparity", "image_2", "image_3"] {
            let dir_rel = seq_rel.join(sub);
            if !src.join(&dir_rel).is_dir() {
                continue;
            }
            for rel in list_files(&src.join(&dir_rel))? {
                let full_rel = dir_rel.join(&rel);
                handled.insert(full_rel.clone());
                let stem = rel.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                let Ok(old) = stem.parse::<usize>() else {
                    copy_file(&src.join(&full_rel), &dst.join(&full_rel))?;
                    report.files_written += 1;
                    continue;
                };
                if let Some(new) = frames.new_index(old) {
                    let ext = rel.extension().and_then(|e| e.to_str()).unwrap_or("");
                    let name = format!("{}.{ext}", frame_name(new));
                    copy_file(&src.join(&full_rel), &dst.join(&dir_rel).join(name))?;
                    report.files_written += 1;
                }
            }
        }
    }

    let oxts_rel = seq_rel.join("oxts");
    let ts_rel = oxts_rel.join("timestamps.txt");
    if src.join(&ts_rel).exists() {
        let text = read_text(&src.join(&ts_rel))?;
        let lines: Vec<&str> = split_lines(&text).into_iter().filter(|l| !l.trim().is_empty()).collect();
        let rel_times = parse_oxts_timestamps(&text, &src.join(&ts_rel), "")?;
        let origin = parse_datetime(lines.first().copied().unwrap_or(""));
        let plan = imu_plan(&rel_times, spec);
        report.imu_in = lines.len();
        report.imu_out = plan.len();
        let identity = plan.len() == lines.len() && plan.iter().enumerate().all(|(k, &(i, t))| k == i && t == rel_times[i]);
        if !identity {
            let origin = origin.ok_or_else(|| Error::parse(src.join(&ts_rel), 1, "bad timestamp"))?;
            let new_lines: Vec<String> = plan
                .iter()
                .map(|&(i, t)| {
                    if t == rel_times[i] {
                        lines[i].to_string()
                    } else {
                        let dt = origin + chrono::Duration::nanoseconds(t.0);
                        format!("{}\n", dt.format("%Y-%m-%d %H:%M:%S%.9f"))
                    }
                })
                .collect();
            write_lines(&dst.join(&ts_rel), new_lines.iter().map(String::as_str))?;
            handled.insert(ts_rel);
            report.files_written += 1;
            let data_rel = oxts_rel.join("data");
            for rel in list_files(&src.join(&data_rel))? {
                handled.insert(data_rel.join(rel));
            }
            for (k, &(i, _)) in plan.iter().enumerate() {
                copy_file(
                    &src.join(&data_rel).join(format!("{i:010}.txt")),
                    &dst.join(&data_rel).join(format!("{k:010}.txt")),
                )?;
                report.files_written += 1;
            }
        }
    }
    Ok(())
}

fn degrade_euroc(
    src: &Path,
    dst: &Path,
    spec: &DegradationSpec,
    handled: &mut BTreeSet<PathBuf>,
    report: &mut RewriteReport,
) -> Result<()> {
    let mav = mav_dir(Path::new(""));
    let imu_rel = mav.join("imu0").join("data.csv");
    let text = read_text(&src.join(&imu_rel))?;
    let lines = split_lines(&text);
    let (header, rows) = lines.split_first().ok_or_else(|| Error::parse(src.join(&imu_rel), 1, "missing header"))?;
    let rows: Vec<&str> = rows.iter().copied().filter(|l| !l.trim().is_empty()).collect();
    let times = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let tok = r.split(',').next().unwrap_or("").trim();
            tok.parse::<i64>()
                .map(Timestamp)
                .map_err(|_| Error::parse(src.join(&imu_rel), k + 2, format!("bad timestamp {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = imu_plan(&times, spec);
    report.imu_in = rows.len();
    report.imu_out = plan.len();
    let identity = plan.len() == rows.len() && plan.iter().enumerate().all(|(k, &(i, t))| k == i && t == times[i]);
    if !identity {
        let mut out = vec![header.to_string()];
        for &(i, t) in &plan {
            if t == times[i] {
                out.push(rows[i].to_string());
            } else {
                let rest = rows[i].split_once(',').map(|x| x.1).unwrap_or("");
                let rest = if rest.ends_with('\n') { rest.to_string() } else { format!("{rest}\n") };
                out.push(format!("{},{rest}", t.0));
            }
        }
        write_lines(&dst.join(&imu_rel), out.iter().map(String::as_str))?;
        handled.insert(imu_rel);
        report.files_written += 1;
    }

    let cam0_rel = mav.join("cam0").join("data.csv");
    let cam_text = read_text(&src.join(&cam0_rel))?;
    let cam_lines = split_lines(&cam_text);
    let n = cam_lines.iter().skip(1).filter(|l| !l.trim().is_empty()).count();
    report.frames_in = n;
    if spec.cam_drop_rate == 0.0 {
        report.frames_out = n;
        return Ok(());
    }
    let keep = drop_frames(n, spec.cam_drop_rate, seed_of(spec));
    report.frames_out = keep.len();
    let mut dropped_stems: BTreeSet<String> = BTreeSet::new();
    for cam in ["cam0", "cam1"] {
        let rel = mav.join(cam).join("data.csv");
        if !src.join(&rel).exists() {
            continue;
        }
        let text = read_text(&src.join(&rel))?;
        let lines = split_lines(&text);
        let (header, rows) = lines.split_first().ok_or_else(|| Error::parse(src.join(&rel), 1, "missing header"))?;
        let rows: Vec<&str> = rows.iter().copied().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != n {
            return Err(Error::DimensionMismatch(format!("{}: {} rows, cam0 has {n}", rel.display(), rows.len())));
        }
        let mut out = vec![*header];
        for (i, r) in rows.iter().enumerate() {
            if keep.binary_search(&i).is_ok() {
                out.push(r);
            } else {
                let mut f = r.split(',');
                let ts = f.next().unwrap_or("").trim().to_string();
                let name = f.next().unwrap_or("").trim().to_string();
                dropped_stems.insert(ts);
                handled.insert(mav.join(cam).join("data").join(name));
            }
        }
        write_lines(&dst.join(&rel), out)?;
        handled.insert(rel);
        report.files_written += 1;
    }
    let disp_rel = mav.join("disparity");
    if src.join(&disp_rel).is_dir() {
        for rel in list_files(&src.join(&disp_rel))? {
            let stem = rel.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if dropped_stems.contains(stem) {
                handled.insert(disp_rel.join(&rel));
            }
        }
    }
    Ok(())
}
