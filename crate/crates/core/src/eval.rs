//! Trajectory integration, loss functionals and odometry metrics.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::estimate_rigid_transform;
use crate::error::{Error, Result};
use crate::imu::Timestamp;
use crate::se3::{RigidTransform, Se3Tangent};

/// Segment lengths of the KITTI odometry benchmark, meters.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Start-frame stride used by the KITTI devkit.
pub const KITTI_STRIDE: usize = 10;

/// Timestamped world-from-body poses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<(Timestamp, RigidTransform)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(Timestamp, RigidTransform)>) -> Result<Self> {
        if let Some(i) = (1..entries.len()).find(|&i| entries[i].0 <= entries[i - 1].0) {
            return Err(Error::MalformedStream(format!(
                "trajectory timestamp {} at entry {} does not increase past {}",
                entries[i].0,
                i,
                entries[i - 1].0
            )));
        }
        Ok(Trajectory { entries })
    }

    pub fn entries(&self) -> &[(Timestamp, RigidTransform)] {
        &self.entries
    }

    pub fn poses(&self) -> impl Iterator<Item = &RigidTransform> {
        self.entries.iter().map(|e| &e.1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &RigidTransform) -> Trajectory {
        Trajectory {
            entries: self.entries.iter().map(|(ts, p)| (*ts, t.compose(p))).collect(),
        }
    }

    /// `pose_{k-1}⁻¹ · pose_k` for every consecutive pair.
    pub fn relatives(&self) -> Vec<(Timestamp, RigidTransform)> {
        self.entries
            .windows(2)
            .map(|w| (w[1].0, w[0].1.inverse().compose(&w[1].1)))
            .collect()
    }

    /// Cumulative path length at every entry.
    pub fn path_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut acc = 0.0;
        for (i, (_, p)) in self.entries.iter().enumerate() {
            if i > 0 {
                acc += (p.translation - self.entries[i - 1].1.translation).norm();
            }
            out.push(acc);
        }
        out
    }
}

/// `pose_k = pose_{k-1} · exp(ξ_k)`, starting at `origin` stamped `t0`.
pub fn integrate_se3_chain(
    t0: Timestamp,
    relatives: &[(Timestamp, Se3Tangent)],
    origin: &RigidTransform,
) -> Result<Trajectory> {
    let mut entries = Vec::with_capacity(relatives.len() + 1);
    entries.push((t0, *origin));
    let mut pose = *origin;
    for (t, xi) in relatives {
        pose = pose.compose(&xi.exp());
        entries.push((*t, pose));
    }
    Trajectory::new(entries)
}

/// Mean errors of all windows of one length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthError {
    pub length: f64,
    /// Percent.
    pub t_rel: f64,
    /// Degrees per 100 m.
    pub r_rel: f64,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeErrorReport {
    /// Percent, averaged over every window of every length.
    pub t_rel: f64,
    /// Degrees per 100 m, averaged the same way.
    pub r_rel: f64,
    pub windows: usize,
    /// Only lengths with at least one window appear here.
    pub per_length: Vec<LengthError>,
}

/// KITTI-style relative errors.
///
/// For every start frame `i` on the stride and every length `L`, the window
/// ends at the first frame `j` whose ground-truth path length from `i` is at
/// least `L`. The error pose `(gt_i⁻¹ gt_j)⁻¹ (est_i⁻¹ est_j)` is normalized by
/// `L`.
pub fn kitti_relative_errors(
    est: &Trajectory,
    gt: &Trajectory,
    lengths: &[f64],
    stride: usize,
) -> Result<RelativeErrorReport> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} poses, ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    if stride == 0 || lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidArgument("stride and lengths must be positive".into()));
    }
    let dist = gt.path_distances();
    let starts: Vec<usize> = (0..gt.len()).step_by(stride).collect();

    // (length index, translation error fraction, rotation error rad/m)
    let per_start: Vec<Vec<(usize, f64, f64)>> = starts
        .par_iter()
        .map(|&i| {
            let mut out = Vec::new();
            for (li, &len) in lengths.iter().enumerate() {
                let target = dist[i] + len;
                let j = i + dist[i..].partition_point(|&d| d < target);
                if j >= gt.len() {
                    continue;
                }
                let (g, e) = (&gt.entries[..], &est.entries[..]);
                let gt_rel = g[i].1.inverse().compose(&g[j].1);
                let est_rel = e[i].1.inverse().compose(&e[j].1);
                let err = gt_rel.inverse().compose(&est_rel);
                out.push((li, err.translation.norm() / len, err.rotation.angle() / len));
            }
            out
        })
        .collect();

    let mut sums = vec![(0.0, 0.0, 0usize); lengths.len()];
    let (mut t_all, mut r_all, mut n_all) = (0.0, 0.0, 0usize);
    for (li, t, r) in per_start.into_iter().flatten() {
        sums[li].0 += t;
        sums[li].1 += r;
        sums[li].2 += 1;
        t_all += t;
        r_all += r;
        n_all += 1;
    }
    let to_deg_per_100m = 180.0 / std::f64::consts::PI * 100.0;
    let per_length = lengths
        .iter()
        .zip(&sums)
        .filter(|(_, s)| s.2 > 0)
        .map(|(&length, &(t, r, n))| LengthError {
            length,
            t_rel: t / n as f64 * 100.0,
            r_rel: r / n as f64 * to_deg_per_100m,
            windows: n,
        })
        .collect();
    let mean = |s: f64| if n_all == 0 { 0.0 } else { s / n_all as f64 };
    Ok(RelativeErrorReport {
        t_rel: mean(t_all) * 100.0,
        r_rel: mean(r_all) * to_deg_per_100m,
        windows: n_all,
        per_length,
    })
}

/// Weights balancing translation against rotation in the pose losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub beta: f64,
    pub beta_prime: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 1.0,
            beta_prime: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta_prime > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be positive, got beta {} and beta_prime {}",
                self.beta, self.beta_prime
            )));
        }
        Ok(())
    }
}

fn pose_loss(pred: &Se3Tangent, target: &Se3Tangent, weight: f64) -> f64 {
    (pred.omega - target.omega).norm() + weight * (pred.upsilon - target.upsilon).norm()
}

/// `‖ω - ω̂‖ + β ‖υ - υ̂‖`.
pub fn loss_imu(pred: &Se3Tangent, target: &Se3Tangent, cfg: &LossConfig) -> f64 {
    pose_loss(pred, target, cfg.beta)
}

/// `‖ω - ω̂‖ + β′ ‖υ - υ̂‖`.
pub fn loss_vio(pred: &Se3Tangent, target: &Se3Tangent, cfg: &LossConfig) -> f64 {
    pose_loss(pred, target, cfg.beta_prime)
}

pub fn total_loss(l_flow: f64, l_imu: f64, l_vio: f64) -> f64 {
    l_flow + l_imu + l_vio
}

/// Absolute trajectory RMSE after rigid alignment of the positions.
///
/// Degenerate position sets (fewer than three points, or collinear) are
/// aligned by translation only.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} poses, ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::EmptyInput("ATE needs at least one pose"));
    }
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = gt
        .poses()
        .zip(est.poses())
        .map(|(g, e)| (g.translation, e.translation))
        .collect();
    // Coinciding positions are already optimally aligned, and skipping the
    // SVD keeps the result exactly zero.
    if pairs.iter().all(|(g, e)| g == e) {
        return Ok(0.0);
    }
    let align = match estimate_rigid_transform(&pairs) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => {
            let n = pairs.len() as f64;
            let shift = pairs.iter().map(|(g, e)| g - e).sum::<Vector3<f64>>() / n;
            RigidTransform::from_translation(shift)
        }
        Err(e) => return Err(e),
    };
    let sq: f64 = pairs
        .iter()
        .map(|(g, e)| (g - align.transform_point(e)).norm_squared())
        .sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Rotation;

    fn line(n: usize, step: f64) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| {
                    (
                        Timestamp(i as i64 * 100_000_000),
                        RigidTransform::from_translation(Vector3::new(i as f64 * step, 0.0, 0.0)),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_chain_is_origin() {
        let o = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let t = integrate_se3_chain(Timestamp(0), &[], &o).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].1, o);
    }

    #[test]
    fn chain_of_unit_steps() {
        let xi = Se3Tangent::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let rel: Vec<_> = (1..=7).map(|i| (Timestamp(i), xi)).collect();
        let t = integrate_se3_chain(Timestamp(0), &rel, &RigidTransform::identity()).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.entries()[7].1.translation.z, 7.0);
        let back: Vec<_> = rel.iter().rev().cloned().collect();
        assert!(integrate_se3_chain(Timestamp(0), &back, &RigidTransform::identity()).is_err());
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let gt = line(300, 1.0);
        let r = kitti_relative_errors(&gt, &gt, &KITTI_LENGTHS, 1).unwrap();
        assert_eq!((r.t_rel, r.r_rel), (0.0, 0.0));
        assert_eq!(r.per_length.len(), 2);
    }

    #[test]
    fn short_trajectory_gives_empty_breakdown() {
        let gt = line(50, 1.0);
        let r = kitti_relative_errors(&gt, &gt, &KITTI_LENGTHS, KITTI_STRIDE).unwrap();
        assert!(r.per_length.is_empty());
        assert_eq!(r.windows, 0);
    }

    #[test]
    fn loss_arithmetic() {
        let a = Se3Tangent::new(Vector3::new(3.0, 4.0, 0.0), Vector3::new(0.0, 0.0, 2.0));
        let z = Se3Tangent::zero();
        let cfg = LossConfig {
            beta: 10.0,
            beta_prime: 1.0,
        };
        assert_eq!(loss_imu(&a, &z, &cfg), 25.0);
        assert_eq!(loss_vio(&a, &z, &cfg), 7.0);
        assert_eq!(loss_imu(&z, &a, &cfg), loss_imu(&a, &z, &cfg));
        assert_eq!(loss_imu(&a, &a, &cfg), 0.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0), 6.0);
    }

    #[test]
    fn ate_absorbs_rigid_offsets() {
        let mut gt = Vec::new();
        for i in 0..20 {
            let a = i as f64 * 0.3;
            gt.push((Timestamp(i), RigidTransform::from_translation(Vector3::new(a.cos() * 5.0, a.sin() * 5.0, 0.1 * i as f64))));
        }
        let gt = Trajectory::new(gt).unwrap();
        assert!(ate_rmse(&gt, &gt).unwrap() < 1e-12);
        let moved = gt.transformed(&RigidTransform::new(Rotation::about_z(0.4), Vector3::new(1.0, 1.0, 1.0)));
        assert!(ate_rmse(&moved, &gt).unwrap() < 1e-9);
        let straight = line(10, 1.0);
        let shifted = straight.transformed(&RigidTransform::from_translation(Vector3::new(0.0, 1.0, 0.0)));
        assert!(ate_rmse(&shifted, &straight).unwrap() < 1e-12);
    }
}
