//! SO(3) / SE(3) group operations and their exponential and logarithm maps.
//!
//! Rotations are stored as 3×3 matrices. Tangent vectors of SE(3) are
//! ordered `(omega, upsilon)`: rotation vector first, then the translational
//! part, everywhere in this crate and in every file it writes.
//!
//! Small angles (`θ < SMALL_ANGLE`) go through truncated Taylor series. The
//! logarithm switches to an axis extraction from the symmetric part of the
//! matrix when the angle approaches π, where `sin θ` no longer carries the
//! axis reliably. At exactly π the axis sign is fixed so that its largest
//! component is positive.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Below this angle exp/log/Jacobians use series expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Within this distance of π the logarithm extracts the axis from `R + Rᵀ`.
const NEAR_PI: f64 = 1e-2;

/// Tolerance used when validating externally supplied rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Orthonormality drift above which compositions are projected back onto SO(3).
const REORTHONORMALIZE_DRIFT: f64 = 1e-7;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; reads the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A 3D rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `m` as a rotation (orthonormal, det +1) within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite rotation matrix".into()));
        }
        let drift = orthonormality_drift(&m);
        let det = m.determinant();
        if drift > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "matrix is not a rotation (drift {drift:e}, det {det})"
            )));
        }
        Ok(Rotation(m))
    }

    /// Projects an approximately orthonormal matrix onto SO(3) (polar decomposition).
    pub fn from_matrix_projected(m: Matrix3<f64>) -> Self {
        Rotation(project_to_so3(&m))
    }

    /// Builds from a quaternion `(w, x, y, z)`; the quaternion is normalized first.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Rotation(*q.to_rotation_matrix().matrix())
    }

    /// Quaternion `(w, x, y, z)` with non-negative `w`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.0);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.w, q.i, q.j, q.k]
    }

    pub fn about_x(angle: f64) -> Self {
        so3_exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn about_y(angle: f64) -> Self {
        so3_exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn about_z(angle: f64) -> Self {
        so3_exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn exp(omega: &Vector3<f64>) -> Self {
        so3_exp(omega)
    }

    pub fn log(&self) -> Vector3<f64> {
        so3_log(self)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        so3_log(self).norm()
    }

    /// Angle of `selfᵀ · other`.
    pub fn angular_distance(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let m = self.0 * other.0;
        if orthonormality_drift(&m) > REORTHONORMALIZE_DRIFT {
            Rotation(project_to_so3(&m))
        } else {
            Rotation(m)
        }
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

fn orthonormality_drift(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Rodrigues' formula.
pub fn so3_exp(omega: &Vector3<f64>) -> Rotation {
    let theta = omega.norm();
    let w = hat(omega);
    let w2 = w * w;
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin();
        (theta.sin() / theta, 2.0 * s * s / (theta * theta))
    };
    Rotation(Matrix3::identity() + w * a + w2 * b)
}

/// Canonical rotation vector with norm in `[0, π]`.
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix();
    let cos = 0.5 * (m.trace() - 1.0);
    let s = vee(m);
    let sin = s.norm();
    let theta = sin.atan2(cos);

    if theta < SMALL_ANGLE {
        return s * (1.0 + theta * theta / 6.0);
    }
    if theta < PI - NEAR_PI {
        return s * (theta / sin);
    }

    // aaᵀ = (sym(R) - cos I) / (1 - cos)
    let b = ((m + m.transpose()) * 0.5 - Matrix3::identity() * cos) / (1.0 - cos);
    let mut k = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(k, k)] {
            k = i;
        }
    }
    let ak = b[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for j in 0..3 {
        axis[j] = if j == k { ak } else { b[(k, j)] / ak };
    }
    axis.normalize_mut();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3); also the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let w = hat(phi);
    let w2 = w * w;
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        let half = 0.5 * theta;
        let s = half.sin();
        (2.0 * s * s / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + w * a + w2 * b
}

/// Inverse of [`so3_left_jacobian`].
pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let w = hat(phi);
    let w2 = w * w;
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    Matrix3::identity() - w * 0.5 + w2 * c
}

/// Right Jacobian: `exp(φ + δ) ≈ exp(φ) exp(J_r(φ) δ)`.
pub fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_left_jacobian(&-phi)
}

pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_left_jacobian_inv(&-phi)
}

/// Element of se(3), ordered `(omega, upsilon)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Se3Tangent {
    /// Rotation vector, radians.
    pub omega: Vector3<f64>,
    /// Translational part, meters.
    pub upsilon: Vector3<f64>,
}

impl Se3Tangent {
    pub fn new(omega: Vector3<f64>, upsilon: Vector3<f64>) -> Self {
        Se3Tangent { omega, upsilon }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Se3Tangent {
            omega: Vector3::new(v[0], v[1], v[2]),
            upsilon: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.upsilon.x,
            self.upsilon.y,
            self.upsilon.z,
        ]
    }

    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.upsilon.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn exp(&self) -> RigidTransform {
        se3_exp(self)
    }
}

impl fmt::Display for Se3Tangent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "{} {} {} {} {} {}", a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

/// Rigid motion `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    /// Meters.
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidTransform::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        RigidTransform::new(r, Vector3::zeros())
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -(r_inv.rotate(&self.translation)),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn log(&self) -> Se3Tangent {
        se3_log(self)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major `[R | t]`, the KITTI pose-line layout.
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    /// Inverse of [`Self::to_row_major_3x4`]. Rotations that are off SO(3) by
    /// more than `tolerance` are rejected; smaller drift (text rounding) is
    /// projected away.
    pub fn from_row_major_3x4(v: &[f64; 12], tolerance: f64) -> Result<Self> {
        let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pose".into()));
        }
        let drift = orthonormality_drift(&m);
        if drift > tolerance || (m.determinant() - 1.0).abs() > tolerance {
            return Err(Error::InvalidArgument(format!(
                "pose rotation is not orthonormal (drift {drift:e})"
            )));
        }
        let rotation = if drift > ROTATION_TOLERANCE {
            Rotation(project_to_so3(&m))
        } else {
            Rotation(m)
        };
        Ok(RigidTransform::new(rotation, Vector3::new(v[3], v[7], v[11])))
    }

    /// Geodesic interpolation: `self ∘ exp(s · log(self⁻¹ other))`.
    pub fn interpolate(&self, other: &RigidTransform, s: f64) -> RigidTransform {
        let delta = self.inverse().compose(other).log();
        let scaled = Se3Tangent::new(delta.omega * s, delta.upsilon * s);
        self.compose(&scaled.exp())
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<Vector3<f64>> for RigidTransform {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.transform_point(&rhs)
    }
}

pub fn se3_exp(xi: &Se3Tangent) -> RigidTransform {
    RigidTransform {
        rotation: so3_exp(&xi.omega),
        translation: so3_left_jacobian(&xi.omega) * xi.upsilon,
    }
}

/// `upsilon = V(omega)⁻¹ t`.
pub fn se3_log(t: &RigidTransform) -> Se3Tangent {
    let omega = so3_log(&t.rotation);
    Se3Tangent {
        omega,
        upsilon: so3_left_jacobian_inv(&omega) * t.translation,
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn transform_point(t: &RigidTransform, p: &Vector3<f64>) -> Vector3<f64> {
    t.transform_point(p)
}
