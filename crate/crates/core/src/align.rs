//! Closed-form least-squares rigid alignment of matched point pairs.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Rotation};

/// Ratio of second to first singular value of the cross-covariance below
/// which the configuration counts as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

/// Finds `(R, t)` minimizing `Σ ‖target − (R · source + t)‖²` over pairs
/// `(target, source)`, with `det R = +1`.
pub fn estimate_rigid_transform(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let (sum_t, sum_s) = pairs
        .iter()
        .fold((Vector3::zeros(), Vector3::zeros()), |(a, b), (t, s)| (a + t, b + s));
    let mean_t = sum_t / n;
    let mean_s = sum_s / n;

    let mut h = Matrix3::zeros();
    for (t, s) in pairs {
        h += (s - mean_s) * (t - mean_t).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::Degenerate(format!(
            "point pairs are collinear or coincident (singular values {:e}, {:e}, {:e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = Rotation::from_matrix_projected(v * d * u.transpose());
    let t = mean_t - r.rotate(&mean_s);
    Ok(RigidTransform::new(r, t))
}
