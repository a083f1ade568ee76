//! Disparity → depth → point cloud, with the depth band filter.
//!
//! Pixel coordinates are 0-based and refer to pixel centers: pixel `(x, y)`
//! sits at image coordinate `(x, y)` exactly.

use std::collections::HashMap;
use std::marker::PhantomData;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::se3::RigidTransform;

/// Disparities at or below this value (pixels) are treated as invalid.
pub const MIN_DISPARITY: f64 = 1e-3;

/// Default `(d1, d2)` depth band in meters.
pub const DEFAULT_DEPTH_BAND: (f64, f64) = (1.0, 80.0);

/// Pinhole intrinsics of the left camera, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.cx.is_finite() && self.cy.is_finite())
            || !self.fx.is_finite()
            || !self.fy.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Rectified stereo pair plus the camera-to-IMU extrinsic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Meters.
    pub baseline: f64,
    /// Maps left-camera coordinates into the IMU (body) frame.
    pub cam_to_imu: RigidTransform,
}

impl StereoRig {
    pub fn new(
        intrinsics: CameraIntrinsics,
        baseline: f64,
        cam_to_imu: RigidTransform,
    ) -> Result<Self> {
        intrinsics.validate()?;
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        Ok(StereoRig {
            intrinsics,
            baseline,
            cam_to_imu,
        })
    }

    /// Maps left-camera coordinates into right-camera coordinates.
    pub fn left_to_right(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(-self.baseline, 0.0, 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disparity {}
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {}

/// Dense per-pixel scalar map with a validity mask, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMap<K> {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    _kind: PhantomData<K>,
}

/// Horizontal disparity `x_L - x_R`, pixels.
pub type DisparityMap = PixelMap<Disparity>;
/// Left-camera depth, meters.
pub type DepthMap = PixelMap<Depth>;

impl<K> PixelMap<K> {
    /// All pixels invalid, values zero.
    pub fn new(width: usize, height: usize) -> Self {
        PixelMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
            _kind: PhantomData,
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} map needs {} values, got {} values and {} mask entries",
                width,
                height,
                width * height,
                values.len(),
                valid.len()
            )));
        }
        Ok(PixelMap {
            width,
            height,
            values,
            valid,
            _kind: PhantomData,
        })
    }

    /// Every finite, strictly positive value is valid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Self::from_parts(width, height, values, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Value at a valid pixel.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = self.index(x, y);
        self.valid[i].then_some(self.values[i])
    }

    /// Raw stored value regardless of validity.
    pub fn raw(&self, x: usize, y: usize) -> f64 {
        self.values[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.index(x, y);
        self.values[i] = value;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Valid pixels as `(x, y, value)` in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, ok))| **ok)
            .map(move |(i, (v, _))| (i % w, i / w, *v))
    }

    fn map_valid<K2>(&self, f: impl Fn(f64) -> Option<f64>) -> PixelMap<K2> {
        let mut values = vec![0.0; self.values.len()];
        let mut valid = vec![false; self.values.len()];
        for i in 0..self.values.len() {
            if self.valid[i] {
                if let Some(v) = f(self.values[i]) {
                    values[i] = v;
                    valid[i] = true;
                }
            }
        }
        PixelMap {
            width: self.width,
            height: self.height,
            values,
            valid,
            _kind: PhantomData,
        }
    }
}

/// Integer pixel a point was reconstructed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub x: u32,
    pub y: u32,
}

impl PixelCoord {
    /// Marker for points that did not come from an image.
    pub const UNANCHORED: PixelCoord = PixelCoord {
        x: u32::MAX,
        y: u32::MAX,
    };

    pub fn new(x: u32, y: u32) -> Self {
        PixelCoord { x, y }
    }

    pub fn is_anchored(&self) -> bool {
        *self != Self::UNANCHORED
    }
}

/// Points in the left-camera frame, each tagged with its source pixel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    source_pixel: Vec<PixelCoord>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, source_pixel: Vec<PixelCoord>) -> Result<Self> {
        if points.len() != source_pixel.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} source pixels",
                points.len(),
                source_pixel.len()
            )));
        }
        Ok(PointCloud {
            points,
            source_pixel,
        })
    }

    /// Cloud without pixel provenance.
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        let source_pixel = vec![PixelCoord::UNANCHORED; points.len()];
        PointCloud {
            points,
            source_pixel,
        }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn source_pixels(&self) -> &[PixelCoord] {
        &self.source_pixel
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
            source_pixel: self.source_pixel.clone(),
        }
    }

    /// Keeps the subset at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            source_pixel: indices.iter().map(|&i| self.source_pixel[i]).collect(),
        }
    }
}

/// Keeps the lowest-index point of every occupied voxel. Returns the reduced
/// cloud and, for each kept point, its index in the input.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> (PointCloud, Vec<usize>) {
    assert!(leaf > 0.0, "voxel leaf must be positive");
    let mut seen: HashMap<(i64, i64, i64), ()> = HashMap::with_capacity(cloud.len() / 4);
    let mut kept = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = (
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        );
        if seen.insert(key, ()).is_none() {
            kept.push(i);
        }
    }
    (cloud.select(&kept), kept)
}

/// `depth = fx · b / disparity`; disparities `≤ MIN_DISPARITY` become invalid.
pub fn disparity_to_depth(d: &DisparityMap, rig: &StereoRig) -> DepthMap {
    let fb = rig.intrinsics.fx * rig.baseline;
    d.map_valid(|disp| (disp > MIN_DISPARITY && disp.is_finite()).then(|| fb / disp))
}

/// Inverse of [`disparity_to_depth`].
pub fn depth_to_disparity(d: &DepthMap, rig: &StereoRig) -> DisparityMap {
    let fb = rig.intrinsics.fx * rig.baseline;
    d.map_valid(|z| (z > 0.0 && z.is_finite()).then(|| fb / z))
}

/// Keeps pixels with `d1 < depth < d2`.
pub fn depth_band_filter(d: &DepthMap, d1: f64, d2: f64) -> Result<DepthMap> {
    if d1.is_nan() || d2.is_nan() || d1 < 0.0 || d1 >= d2 {
        return Err(Error::InvalidBand { d1, d2 });
    }
    Ok(d.map_valid(|z| (z > d1 && z < d2).then_some(z)))
}

/// `c = K⁻¹ · depth · (x, y, 1)ᵀ` for a single pixel.
pub fn unproject_pixel(x: f64, y: f64, depth: f64, k: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new(
        (x - k.cx) * depth / k.fx,
        (y - k.cy) * depth / k.fy,
        depth,
    )
}

/// One point per valid pixel, row-major.
pub fn depth_to_pointcloud(d: &DepthMap, k: &CameraIntrinsics) -> PointCloud {
    let n = d.valid_count();
    let mut points = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n);
    for (x, y, z) in d.iter_valid() {
        points.push(unproject_pixel(x as f64, y as f64, z, k));
        pixels.push(PixelCoord::new(x as u32, y as u32));
    }
    PointCloud {
        points,
        source_pixel: pixels,
    }
}

/// Pinhole projection; points with `z ≤ 0` are behind the camera.
pub fn project_point(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}
