//! Trajectory metrics against ground truth.

use std::fmt::Write as _;
use std::path::Path;

use vio_geom::eval::{ate_rmse, kitti_relative_errors, Trajectory};
use vio_geom::io::config::EvalConfig;
use vio_geom::{Error, Result};

use super::files;
use crate::outcome::{AtStage, Report, StageResult};

const STAGE: &str = "eval";

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Poses present in both trajectories.
    pub matched: usize,
    /// Percent; NaN when no window fits in the trajectory.
    pub t_rel: f64,
    /// Degrees per 100 m; NaN when no window fits.
    pub r_rel: f64,
    pub windows: usize,
    /// `(length, t_rel, r_rel, windows)` for every length with a window.
    pub per_length: Vec<(f64, f64, f64, usize)>,
    pub ate: f64,
    /// Distance between the final estimated and ground-truth positions,
    /// without alignment.
    pub final_drift: f64,
    pub gt_length: f64,
}

/// Keeps the poses whose timestamps appear in both trajectories.
pub fn match_timestamps(est: &Trajectory, gt: &Trajectory) -> Result<(Trajectory, Trajectory)> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for e in est.entries() {
        if let Ok(k) = gt.entries().binary_search_by(|g| g.0.cmp(&e.0)) {
            a.push(*e);
            b.push(gt.entries()[k]);
        }
    }
    Ok((Trajectory::new(a)?, Trajectory::new(b)?))
}

pub fn compute(est: &Trajectory, gt: &Trajectory, cfg: &EvalConfig) -> Result<Metrics> {
    let (e, g) = match_timestamps(est, gt)?;
    if e.len() < 2 {
        return Err(Error::EmptyInput("fewer than two poses share a timestamp with the ground truth"));
    }
    let rel = kitti_relative_errors(&e, &g, &cfg.lengths, cfg.stride)?;
    let none = rel.windows == 0;
    let last = e.len() - 1;
    Ok(Metrics {
        matched: e.len(),
        t_rel: if none { f64::NAN } else { rel.t_rel },
        r_rel: if none { f64::NAN } else { rel.r_rel },
        windows: rel.windows,
        per_length: rel.per_length.iter().map(|l| (l.length, l.t_rel, l.r_rel, l.windows)).collect(),
        ate: ate_rmse(&e, &g)?,
        final_drift: (e.entries()[last].1.translation - g.entries()[last].1.translation).norm(),
        gt_length: g.path_distances().last().copied().unwrap_or(0.0),
    })
}

/// Computes the metrics and writes `report.txt` and `metrics.txt`.
pub fn run(est: &Trajectory, gt: &Trajectory, cfg: &EvalConfig, out: &Path) -> StageResult<(Metrics, Report)> {
    let m = compute(est, gt, cfg).at(STAGE)?;
    let mut report = Report::default();
    let s = &mut report.summary;
    s.push("poses_estimate", est.len());
    s.push("poses_ground_truth", gt.len());
    s.push("matched", m.matched);
    s.push("gt_length_m", m.gt_length);
    s.push("t_rel_percent", m.t_rel);
    s.push("r_rel_deg_per_100m", m.r_rel);
    s.push("windows", m.windows);
    s.push("ate_m", m.ate);
    s.push("final_drift_m", m.final_drift);
    for (len, t, r, w) in &m.per_length {
        s.push(format!("t_rel_percent.{len}"), t);
        s.push(format!("r_rel_deg_per_100m.{len}"), r);
        s.push(format!("windows.{len}"), w);
    }
    if m.windows == 0 {
        report.notes.push(format!(
            "no evaluation window fits in {:.1} m of ground truth; t_rel and r_rel are undefined",
            m.gt_length
        ));
    }

    let mut text = String::new();
    let _ = writeln!(text, "Trajectory evaluation");
    let _ = writeln!(text, "  matched poses        {}", m.matched);
    let _ = writeln!(text, "  ground-truth length  {:.3} m", m.gt_length);
    let _ = writeln!(text, "  t_rel                {:.4} %", m.t_rel);
    let _ = writeln!(text, "  r_rel                {:.4} deg/100 m", m.r_rel);
    let _ = writeln!(text, "  ATE (RMSE, aligned)  {:.4} m", m.ate);
    let _ = writeln!(text, "  final drift          {:.4} m", m.final_drift);
    if !m.per_length.is_empty() {
        let _ = writeln!(text, "\n  length [m]  t_rel [%]  r_rel [deg/100 m]  windows");
        for (len, t, r, w) in &m.per_length {
            let _ = writeln!(text, "  {len:>10.0}  {t:>9.4}  {r:>17.4}  {w:>7}");
        }
    }
    let write = |name: &str, body: &str| {
        let p = out.join(name);
        std::fs::create_dir_all(out)
            .and_then(|_| std::fs::write(&p, body))
            .map_err(|e| Error::Io { path: p.clone(), source: e })
            .at(STAGE)
            .map(|_| p)
    };
    let rp = write(files::REPORT, &text)?;
    let mp = write(files::METRICS, &report.summary.to_text())?;
    report.summary.push("report", rp.display());
    report.summary.push("metrics", mp.display());
    Ok((m, report))
}
