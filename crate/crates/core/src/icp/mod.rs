//! Trimmed point-to-point ICP between consecutive stereo point clouds.
//!
//! The estimated transform maps frame-`t` points into frame `t-1`:
//! `p_prev ≈ R · p_cur + t`. Its logarithm is the stereo relative pose.
//!
//! Iterations match every current point to its nearest previous point. Once
//! converged, the correspondences are re-anchored on the previous cloud (one
//! match per frame-`t-1` point) so flow labels live on the `t-1` pixel grid.
//! Anchors whose residual exceeds a robust threshold are reported as
//! rejected; downstream these are the dynamic regions.

pub mod kdtree;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::estimate_rigid_transform;
use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Se3Tangent};
use crate::stereo::{voxel_downsample, PointCloud};
use kdtree::KdTree;

/// Consistency constant turning a median absolute residual into a Gaussian σ.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub index_prev: usize,
    pub index_cur: usize,
    /// Euclidean distance after alignment, meters.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mean_residual(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.pairs.iter().map(|c| c.residual).sum::<f64>() / self.pairs.len() as f64
        }
    }
}

/// A frame-`t-1` point whose match was rejected. `residual` is infinite when
/// nothing lay within `max_pair_distance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectedAnchor {
    pub index_prev: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Norm of the incremental se(3) step below which ICP stops.
    pub convergence_tol: f64,
    /// Meters.
    pub max_pair_distance: f64,
    /// Fraction of worst pairs discarded at every iteration.
    pub trim_fraction: f64,
    /// Anchors beyond this many robust σ are rejected.
    pub residual_reject_sigma: f64,
    /// Lower bound on the rejection distance, meters.
    pub reject_floor: f64,
    /// Voxel leaf for downsampling large clouds, meters.
    pub voxel_leaf: f64,
    /// Clouds larger than this are downsampled for the iterations.
    pub downsample_above: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            convergence_tol: 1e-8,
            max_pair_distance: 1.0,
            trim_fraction: 0.2,
            residual_reject_sigma: 3.0,
            reject_floor: 0.05,
            voxel_leaf: 0.1,
            downsample_above: 200_000,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("icp: {m}")));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return bad("trim_fraction must lie in [0, 1)");
        }
        if !(self.max_pair_distance > 0.0) {
            return bad("max_pair_distance must be positive");
        }
        if !(self.convergence_tol >= 0.0)
            || !(self.residual_reject_sigma > 0.0)
            || !(self.reject_floor >= 0.0)
            || !(self.voxel_leaf > 0.0)
        {
            return bad("tolerances must be non-negative and sigma/leaf positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    /// Maps frame-`t` points into frame `t-1`.
    pub transform: RigidTransform,
    /// Inlier matches anchored on the previous cloud, sorted by `index_prev`.
    pub correspondences: CorrespondenceSet,
    /// Previous-cloud points whose match was rejected, sorted by `index_prev`.
    pub rejected: Vec<RejectedAnchor>,
    pub mean_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Trimmed RMS residual measured at the start of each iteration.
    pub residual_history: Vec<f64>,
}

fn match_points(tree: &KdTree<'_>, queries: &[Vector3<f64>], max_dist2: f64) -> Vec<Option<(usize, f64)>> {
    queries
        .par_iter()
        .with_min_len(256)
        .map(|q| tree.nearest(q, max_dist2))
        .collect()
}

/// For each point of `b`, its nearest neighbour in `a` within `max_dist`.
/// Pairs are `(index in a, index in b)`, sorted by the `b` index.
pub fn nearest_correspondences(
    a: &PointCloud,
    b: &PointCloud,
    max_dist: f64,
) -> Result<CorrespondenceSet> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("correspondence search needs two non-empty clouds"));
    }
    let tree = KdTree::build(a.points());
    let pairs = match_points(&tree, b.points(), max_dist * max_dist)
        .into_iter()
        .enumerate()
        .filter_map(|(j, m)| {
            m.map(|(i, d2)| Correspondence {
                index_prev: i,
                index_cur: j,
                residual: d2.sqrt(),
            })
        })
        .collect();
    Ok(CorrespondenceSet { pairs })
}

pub fn icp(prev: &PointCloud, cur: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    icp_seeded(prev, cur, params, &RigidTransform::identity())
}

/// ICP starting from `seed` instead of the identity.
pub fn icp_seeded(
    prev: &PointCloud,
    cur: &PointCloud,
    params: &IcpParams,
    seed: &RigidTransform,
) -> Result<IcpResult> {
    params.validate()?;
    if prev.len() < 3 || cur.len() < 3 {
        return Err(Error::RegistrationFailed {
            iteration: 0,
            reason: format!("clouds too small ({} and {} points)", prev.len(), cur.len()),
        });
    }

    let downsample = |c: &PointCloud| {
        if c.len() > params.downsample_above {
            voxel_downsample(c, params.voxel_leaf).0
        } else {
            c.clone()
        }
    };
    let prev_work = downsample(prev);
    let cur_work = downsample(cur);

    let max_d2 = params.max_pair_distance * params.max_pair_distance;
    let tree = KdTree::build(prev_work.points());
    let mut transform = *seed;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.max_iterations {
        let moved: Vec<Vector3<f64>> = cur_work
            .points()
            .iter()
            .map(|p| transform.transform_point(p))
            .collect();
        let mut matches: Vec<(usize, usize, f64)> = match_points(&tree, &moved, max_d2)
            .into_iter()
            .enumerate()
            .filter_map(|(j, m)| m.map(|(i, d2)| (i, j, d2)))
            .collect();
        if matches.len() < 3 {
            return Err(Error::RegistrationFailed {
                iteration: it,
                reason: format!(
                    "{} correspondences within {} m (need 3)",
                    matches.len(),
                    params.max_pair_distance
                ),
            });
        }
        matches.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
        let keep = (((1.0 - params.trim_fraction) * matches.len() as f64).ceil() as usize)
            .clamp(3, matches.len());
        let trimmed = &matches[..keep];
        let rms = (trimmed.iter().map(|m| m.2).sum::<f64>() / keep as f64).sqrt();
        history.push(rms);

        let pairs: Vec<_> = trimmed
            .iter()
            .map(|&(i, j, _)| (prev_work.points()[i], moved[j]))
            .collect();
        let step = estimate_rigid_transform(&pairs).map_err(|e| Error::RegistrationFailed {
            iteration: it,
            reason: e.to_string(),
        })?;
        transform = step.compose(&transform);
        iterations = it + 1;
        if step.log().norm() < params.convergence_tol {
            converged = true;
            break;
        }
    }

    let (correspondences, rejected) = anchor_on_previous(prev, cur, &transform, params);
    Ok(IcpResult {
        transform,
        mean_residual: correspondences.mean_residual(),
        correspondences,
        rejected,
        iterations,
        converged,
        residual_history: history,
    })
}

/// Matches every previous point to the aligned current cloud and splits the
/// matches into inliers and rejected anchors.
fn anchor_on_previous(
    prev: &PointCloud,
    cur: &PointCloud,
    transform: &RigidTransform,
    params: &IcpParams,
) -> (CorrespondenceSet, Vec<RejectedAnchor>) {
    let moved: Vec<Vector3<f64>> = cur.points().iter().map(|p| transform.transform_point(p)).collect();
    let tree = KdTree::build(&moved);
    let max_d2 = params.max_pair_distance * params.max_pair_distance;
    let matches = match_points(&tree, prev.points(), max_d2);

    let mut residuals: Vec<f64> = matches.iter().flatten().map(|m| m.1.sqrt()).collect();
    let threshold = if residuals.is_empty() {
        params.reject_floor
    } else {
        let mid = residuals.len() / 2;
        let (_, median, _) = residuals.select_nth_unstable_by(mid, f64::total_cmp);
        (params.residual_reject_sigma * MAD_TO_SIGMA * *median).max(params.reject_floor)
    };

    let mut inliers = Vec::new();
    let mut rejected = Vec::new();
    for (i, m) in matches.into_iter().enumerate() {
        match m {
            Some((j, d2)) if d2.sqrt() <= threshold => inliers.push(Correspondence {
                index_prev: i,
                index_cur: j,
                residual: d2.sqrt(),
            }),
            Some((_, d2)) => rejected.push(RejectedAnchor {
                index_prev: i,
                residual: d2.sqrt(),
            }),
            None => rejected.push(RejectedAnchor {
                index_prev: i,
                residual: f64::INFINITY,
            }),
        }
    }
    (CorrespondenceSet { pairs: inliers }, rejected)
}

/// Logarithm of a converged ICP transform.
pub fn stereo_se3(result: &IcpResult) -> Result<Se3Tangent> {
    if !result.converged {
        return Err(Error::NotConverged("stereo se3 requires a converged ICP result"));
    }
    Ok(result.transform.log())
}
