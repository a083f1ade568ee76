//! Scene flow labels derived from registered stereo point clouds.
//!
//! A 3D flow vector is `c_{t-1} - c_t` for a matched pair of points, each in
//! its own camera frame. Projected 2D flow lives on the frame `t-1` pixel
//! grid of the left camera.
//!
//! Two projection modes exist. [`ProjectionMode::Literal`] evaluates
//! `K · v / d_L` literally and keeps the first two components. It shares the
//! sign of the 3D vector and ignores depth change between the endpoints.
//! [`ProjectionMode::Endpoint`] subtracts the two projections
//! `π(c_t) - π(c_{t-1})`, which is exact. It is the default.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::icp::{CorrespondenceSet, RejectedAnchor};
use crate::se3::RigidTransform;
use crate::stereo::{project_point, DepthMap, PixelCoord, PointCloud, StereoRig};

/// Default nearest-anchor fill radius for dense synthesis, pixels.
pub const DEFAULT_FILL_RADIUS: u32 = 3;

/// One matched pair and its flow vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowVector {
    /// Source pixel of the frame `t-1` point.
    pub anchor: PixelCoord,
    pub index_prev: usize,
    pub index_cur: usize,
    pub prev_point: Vector3<f64>,
    pub cur_point: Vector3<f64>,
    /// `prev_point - cur_point`, meters.
    pub vector: Vector3<f64>,
}

/// Per-correspondence 3D flow plus the anchors suppressed as dynamic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowField3D {
    pub vectors: Vec<FlowVector>,
    pub dynamic: Vec<PixelCoord>,
}

impl FlowField3D {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Records the source pixels of rejected anchors as dynamic.
    pub fn with_rejected(mut self, prev: &PointCloud, rejected: &[RejectedAnchor]) -> Self {
        self.dynamic.extend(
            rejected
                .iter()
                .filter_map(|r| prev.source_pixels().get(r.index_prev).copied())
                .filter(PixelCoord::is_anchored),
        );
        self
    }
}

/// `c_{t-1} - c_t` for every correspondence.
pub fn compute_3d_flow(
    prev: &PointCloud,
    cur: &PointCloud,
    corr: &CorrespondenceSet,
) -> Result<FlowField3D> {
    let mut vectors = Vec::with_capacity(corr.len());
    for c in &corr.pairs {
        if c.index_prev >= prev.len() || c.index_cur >= cur.len() {
            return Err(Error::InvalidArgument(format!(
                "correspondence ({}, {}) out of range for clouds of {} and {} points",
                c.index_prev,
                c.index_cur,
                prev.len(),
                cur.len()
            )));
        }
        let p = prev.points()[c.index_prev];
        let q = cur.points()[c.index_cur];
        vectors.push(FlowVector {
            anchor: prev.source_pixels()[c.index_prev],
            index_prev: c.index_prev,
            index_cur: c.index_cur,
            prev_point: p,
            cur_point: q,
            vector: p - q,
        });
    }
    Ok(FlowField3D {
        vectors,
        dynamic: Vec::new(),
    })
}

/// State of one flow pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum FlowMask {
    #[default]
    Invalid,
    Valid,
    /// Suppressed moving object; carries zero flow.
    Dynamic,
}

/// Dense 2D flow, row-major, pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField2D {
    width: usize,
    height: usize,
    flow: Vec<[f64; 2]>,
    mask: Vec<FlowMask>,
}

impl FlowField2D {
    /// All pixels invalid.
    pub fn new(width: usize, height: usize) -> Self {
        FlowField2D {
            width,
            height,
            flow: vec![[0.0; 2]; width * height],
            mask: vec![FlowMask::Invalid; width * height],
        }
    }

    /// Builds a field from raw parts. Non-valid pixels are forced to zero.
    pub fn from_parts(
        width: usize,
        height: usize,
        mut flow: Vec<[f64; 2]>,
        mask: Vec<FlowMask>,
    ) -> Result<Self> {
        if flow.len() != width * height || mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} flow needs {} entries, got {} vectors and {} mask entries",
                width,
                height,
                width * height,
                flow.len(),
                mask.len()
            )));
        }
        for (f, m) in flow.iter_mut().zip(&mask) {
            if *m != FlowMask::Valid {
                *f = [0.0; 2];
            }
        }
        Ok(FlowField2D {
            width,
            height,
            flow,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn flow(&self) -> &[[f64; 2]] {
        &self.flow
    }

    pub fn mask(&self) -> &[FlowMask] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> ([f64; 2], FlowMask) {
        let i = y * self.width + x;
        (self.flow[i], self.mask[i])
    }

    pub fn set_valid(&mut self, x: usize, y: usize, v: [f64; 2]) {
        let i = y * self.width + x;
        self.flow[i] = v;
        self.mask[i] = FlowMask::Valid;
    }

    pub fn set_dynamic(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.flow[i] = [0.0; 2];
        self.mask[i] = FlowMask::Dynamic;
    }

    pub fn count(&self, m: FlowMask) -> usize {
        self.mask.iter().filter(|&&k| k == m).count()
    }

    fn contains(&self, p: PixelCoord) -> bool {
        p.is_anchored() && (p.x as usize) < self.width && (p.y as usize) < self.height
    }
}

/// Which camera the 2D flow is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// `K · v / d_L` on the 3D flow vector itself.
    Literal,
    /// Difference of the two endpoint projections.
    #[default]
    Endpoint,
}

/// Sparse 2D flow at the anchor pixels of `field`.
///
/// Anchors without valid depth, or whose endpoints fall behind the camera,
/// stay invalid. Dynamic anchors are written as zero with the dynamic mask.
pub fn project_flow(
    field: &FlowField3D,
    depth: &DepthMap,
    rig: &StereoRig,
    view: View,
    mode: ProjectionMode,
) -> FlowField2D {
    let mut out = FlowField2D::new(depth.width(), depth.height());
    let k = &rig.intrinsics;
    let to_view = match view {
        View::Left => RigidTransform::identity(),
        View::Right => rig.left_to_right(),
    };
    for fv in &field.vectors {
        if !out.contains(fv.anchor) {
            continue;
        }
        let (x, y) = (fv.anchor.x as usize, fv.anchor.y as usize);
        let Some(d) = depth.get(x, y) else { continue };
        let v = match mode {
            ProjectionMode::Literal => {
                let w = match view {
                    View::Left => fv.vector,
                    View::Right => to_view.rotation.rotate(&fv.vector) + to_view.translation,
                };
                if !(d > 0.0) {
                    continue;
                }
                Some([
                    (k.fx * w.x + k.cx * w.z) / d,
                    (k.fy * w.y + k.cy * w.z) / d,
                ])
            }
            ProjectionMode::Endpoint => {
                let a = project_point(&to_view.transform_point(&fv.prev_point), k);
                let b = project_point(&to_view.transform_point(&fv.cur_point), k);
                match (a, b) {
                    (Ok(a), Ok(b)) => Some([b.0 - a.0, b.1 - a.1]),
                    _ => None,
                }
            }
        };
        if let Some(v) = v.filter(|v| v[0].is_finite() && v[1].is_finite()) {
            out.set_valid(x, y, v);
        }
    }
    for &p in &field.dynamic {
        if out.contains(p) {
            out.set_dynamic(p.x as usize, p.y as usize);
        }
    }
    out
}

/// Offsets within `radius`, nearest first, ties broken row-major.
fn fill_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut offs: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    offs.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    offs
}

/// Densifies sparse flow over every pixel that produced a frame `t-1` point.
///
/// Anchored pixels keep their value. Other pixels copy their nearest anchor
/// within `radius`, inheriting its dynamic state. Pixels with no anchor in
/// reach stay invalid.
pub fn synthesize_dense_2d_flow_with_radius(
    sparse: &FlowField2D,
    prev_pointcloud: &PointCloud,
    radius: u32,
) -> FlowField2D {
    let (w, h) = (sparse.width, sparse.height);
    let mut out = FlowField2D::new(w, h);
    let offsets = fill_offsets(radius);
    for &p in prev_pointcloud.source_pixels() {
        if !sparse.contains(p) {
            continue;
        }
        let (x, y) = (p.x as i64, p.y as i64);
        let hit = offsets.iter().find_map(|&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                return None;
            }
            let (v, m) = sparse.get(nx as usize, ny as usize);
            (m != FlowMask::Invalid).then_some((v, m))
        });
        match hit {
            Some((v, FlowMask::Valid)) => out.set_valid(p.x as usize, p.y as usize, v),
            Some(_) => out.set_dynamic(p.x as usize, p.y as usize),
            None => {}
        }
    }
    out
}

/// [`synthesize_dense_2d_flow_with_radius`] at [`DEFAULT_FILL_RADIUS`].
pub fn synthesize_dense_2d_flow(sparse: &FlowField2D, prev_pointcloud: &PointCloud) -> FlowField2D {
    synthesize_dense_2d_flow_with_radius(sparse, prev_pointcloud, DEFAULT_FILL_RADIUS)
}

/// Endpoint error accumulated over pixels valid in both fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpeStats {
    pub sum: f64,
    /// Zero when `count` is zero.
    pub mean: f64,
    pub count: usize,
}

pub fn epe(a: &FlowField2D, b: &FlowField2D) -> Result<EpeStats> {
    let diffs = endpoint_differences(a, b)?;
    let mut sum = 0.0;
    let mut count = 0;
    for d in diffs.into_iter().flatten() {
        sum += d;
        count += 1;
    }
    let mean = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(EpeStats { sum, mean, count })
}

/// Per-pixel `‖a - b‖`, `None` unless both pixels are valid.
pub fn endpoint_differences(a: &FlowField2D, b: &FlowField2D) -> Result<Vec<Option<f64>>> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "flow fields {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok((0..a.flow.len())
        .map(|i| {
            (a.mask[i] == FlowMask::Valid && b.mask[i] == FlowMask::Valid).then(|| {
                let du = a.flow[i][0] - b.flow[i][0];
                let dv = a.flow[i][1] - b.flow[i][1];
                du.hypot(dv)
            })
        })
        .collect())
}
