//! Midpoint IMU preintegration with bias Jacobians and covariance.
//!
//! Between consecutive samples `k` and `k+1` the bias-corrected rates and
//! specific forces are averaged:
//!
//! ```text
//! ΔR_{k+1} = ΔR_k · Exp(½(ω_k + ω_{k+1}) dt - bg dt)
//! ā        = ½(ΔR_k (a_k - ba) + ΔR_{k+1} (a_{k+1} - ba))
//! Δp_{k+1} = Δp_k + Δv_k dt + ½ ā dt²
//! Δv_{k+1} = Δv_k + ā dt
//! ```
//!
//! The bias Jacobians are the exact derivatives of this discrete recursion,
//! so they agree with finite differences of [`preintegrate`] to rounding.
//! Rotation Jacobians and covariance use right perturbations:
//! `ΔR(bg + δ) ≈ ΔR · Exp(J_Rg δ)`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::imu::{validate_stream, ImuNoiseModel, ImuSample, ImuStatus};
use crate::se3::{hat, so3_exp, so3_right_jacobian, RigidTransform, Rotation, Se3Tangent};

/// Default linearization trust region for bias corrections.
pub const DEFAULT_TRUST_REGION: f64 = 0.1;

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix6 = SMatrix<f64, 6, 6>;
type Matrix9x6 = SMatrix<f64, 9, 6>;

/// Derivatives of the deltas with respect to `(bg, ba)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasJacobians {
    pub r_bg: Matrix3<f64>,
    pub v_bg: Matrix3<f64>,
    pub v_ba: Matrix3<f64>,
    pub p_bg: Matrix3<f64>,
    pub p_ba: Matrix3<f64>,
}

impl BiasJacobians {
    fn zero() -> Self {
        let z = Matrix3::zeros();
        BiasJacobians {
            r_bg: z,
            v_bg: z,
            v_ba: z,
            p_bg: z,
            p_ba: z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreintegratedDelta {
    pub delta_r: Rotation,
    pub delta_v: Vector3<f64>,
    pub delta_p: Vector3<f64>,
    pub dt_total: f64,
    /// Error-state covariance, blocks ordered rotation, velocity, position.
    pub covariance: Matrix9,
    pub jacobian_bias: BiasJacobians,
    pub bias_used: ImuStatus,
}

impl PreintegratedDelta {
    pub fn identity(bias: ImuStatus) -> Self {
        PreintegratedDelta {
            delta_r: Rotation::identity(),
            delta_v: Vector3::zeros(),
            delta_p: Vector3::zeros(),
            dt_total: 0.0,
            covariance: Matrix9::zeros(),
            jacobian_bias: BiasJacobians::zero(),
            bias_used: bias,
        }
    }

    /// Marginal covariance of `(rotation, position)`.
    pub fn rotation_position_covariance(&self) -> Matrix6 {
        let mut m = Matrix6::zeros();
        let idx = [0, 1, 2, 6, 7, 8];
        for (i, &a) in idx.iter().enumerate() {
            for (j, &b) in idx.iter().enumerate() {
                m[(i, j)] = self.covariance[(a, b)];
            }
        }
        m
    }

    /// Information matrix of the rotation/position marginal, or the identity
    /// when that marginal cannot be inverted (for a noiseless model, say).
    pub fn information(&self) -> Matrix6 {
        let cov = self.rotation_position_covariance();
        let scale = cov.diagonal().max();
        if !(scale > 0.0) {
            return Matrix6::identity();
        }
        match cov.cholesky() {
            Some(ch) => {
                let inv = ch.inverse();
                if inv.iter().all(|v| v.is_finite()) {
                    0.5 * (inv + inv.transpose())
                } else {
                    Matrix6::identity()
                }
            }
            None => Matrix6::identity(),
        }
    }
}

/// Integrates `samples` under bias `status`.
///
/// A single sample gives the identity delta with `dt_total = 0`.
pub fn preintegrate(
    samples: &[ImuSample],
    status: &ImuStatus,
    noise: &ImuNoiseModel,
) -> Result<PreintegratedDelta> {
    validate_stream(samples)?;
    noise.validate()?;
    let mut d = PreintegratedDelta::identity(*status);
    let (bg, ba) = (status.bg, status.ba);
    let i3 = Matrix3::identity();

    for w in samples.windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        let dt = s1.t.seconds_since(s0.t);
        let r0 = *d.delta_r.matrix();
        let theta = (0.5 * (s0.gyro + s1.gyro) - bg) * dt;
        let step = so3_exp(&theta);
        let jr = so3_right_jacobian(&theta);
        let et = step.matrix().transpose();
        let r1_rot = d.delta_r.compose(&step);
        let r1 = *r1_rot.matrix();

        let u0 = s0.accel - ba;
        let u1 = s1.accel - ba;
        let a_bar = 0.5 * (r0 * u0 + r1 * u1);

        // Bias Jacobians of the discrete recursion.
        let j = d.jacobian_bias;
        let r_bg1 = et * j.r_bg - jr * dt;
        let a_bg = -0.5 * (r0 * hat(&u0) * j.r_bg + r1 * hat(&u1) * r_bg1);
        let a_ba = -0.5 * (r0 + r1);
        d.jacobian_bias = BiasJacobians {
            r_bg: r_bg1,
            v_bg: j.v_bg + a_bg * dt,
            v_ba: j.v_ba + a_ba * dt,
            p_bg: j.p_bg + j.v_bg * dt + 0.5 * a_bg * dt * dt,
            p_ba: j.p_ba + j.v_ba * dt + 0.5 * a_ba * dt * dt,
        };

        // Covariance: the same linearization with white noise on the
        // averaged rate and specific force.
        if noise.gyro_noise_density > 0.0 || noise.accel_noise_density > 0.0 {
            let a_phi = -0.5 * (r0 * hat(&u0) + r1 * hat(&u1) * et);
            let a_ng = 0.5 * r1 * hat(&u1) * jr * dt;
            let a_na = 0.5 * (r0 + r1);
            let mut f = Matrix9::identity();
            f.fixed_view_mut::<3, 3>(0, 0).copy_from(&et);
            f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(a_phi * dt));
            f.fixed_view_mut::<3, 3>(6, 0).copy_from(&(a_phi * (0.5 * dt * dt)));
            f.fixed_view_mut::<3, 3>(6, 3).copy_from(&(i3 * dt));
            let mut g = Matrix9x6::zeros();
            g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-jr * dt));
            g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(a_ng * dt));
            g.fixed_view_mut::<3, 3>(3, 3).copy_from(&(a_na * dt));
            g.fixed_view_mut::<3, 3>(6, 0).copy_from(&(a_ng * (0.5 * dt * dt)));
            g.fixed_view_mut::<3, 3>(6, 3).copy_from(&(a_na * (0.5 * dt * dt)));
            let qg = noise.gyro_noise_density.powi(2) / dt;
            let qa = noise.accel_noise_density.powi(2) / dt;
            let q = SVector::<f64, 6>::new(qg, qg, qg, qa, qa, qa);
            let gq = g * Matrix6::from_diagonal(&q);
            let cov = f * d.covariance * f.transpose() + gq * g.transpose();
            d.covariance = 0.5 * (cov + cov.transpose());
        }

        d.delta_p += d.delta_v * dt + 0.5 * a_bar * dt * dt;
        d.delta_v += a_bar * dt;
        d.delta_r = r1_rot;
        d.dt_total += dt;
    }
    Ok(d)
}

/// Concatenates two deltas integrated under the same bias, the second
/// starting where the first ends.
pub fn compose(a: &PreintegratedDelta, b: &PreintegratedDelta) -> Result<PreintegratedDelta> {
    if a.bias_used != b.bias_used {
        return Err(Error::InvalidArgument(
            "cannot compose deltas integrated under different biases".into(),
        ));
    }
    let ra = *a.delta_r.matrix();
    let rbt = b.delta_r.matrix().transpose();
    let dt2 = b.dt_total;
    let (ja, jb) = (&a.jacobian_bias, &b.jacobian_bias);
    let hv = hat(&b.delta_v);
    let hp = hat(&b.delta_p);

    let jacobian_bias = BiasJacobians {
        r_bg: rbt * ja.r_bg + jb.r_bg,
        v_bg: ja.v_bg + ra * jb.v_bg - ra * hv * ja.r_bg,
        v_ba: ja.v_ba + ra * jb.v_ba,
        p_bg: ja.p_bg + ja.v_bg * dt2 + ra * jb.p_bg - ra * hp * ja.r_bg,
        p_ba: ja.p_ba + ja.v_ba * dt2 + ra * jb.p_ba,
    };

    let mut fa = Matrix9::identity();
    fa.fixed_view_mut::<3, 3>(0, 0).copy_from(&rbt);
    fa.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-ra * hv));
    fa.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-ra * hp));
    fa.fixed_view_mut::<3, 3>(6, 3).copy_from(&(Matrix3::identity() * dt2));
    let mut fb = Matrix9::identity();
    fb.fixed_view_mut::<3, 3>(3, 3).copy_from(&ra);
    fb.fixed_view_mut::<3, 3>(6, 6).copy_from(&ra);
    let cov = fa * a.covariance * fa.transpose() + fb * b.covariance * fb.transpose();

    Ok(PreintegratedDelta {
        delta_r: a.delta_r.compose(&b.delta_r),
        delta_v: a.delta_v + ra * b.delta_v,
        delta_p: a.delta_p + a.delta_v * dt2 + ra * b.delta_p,
        dt_total: a.dt_total + dt2,
        covariance: 0.5 * (cov + cov.transpose()),
        jacobian_bias,
        bias_used: a.bias_used,
    })
}

/// First-order bias update, refused outside `trust_region`.
pub fn apply_bias_correction_within(
    delta: &PreintegratedDelta,
    d_bg: &Vector3<f64>,
    d_ba: &Vector3<f64>,
    trust_region: f64,
) -> Result<PreintegratedDelta> {
    let norm = d_bg.norm().max(d_ba.norm());
    if !(norm <= trust_region) {
        return Err(Error::BiasOutsideTrustRegion {
            norm,
            limit: trust_region,
        });
    }
    let j = &delta.jacobian_bias;
    let mut out = delta.clone();
    out.delta_r = delta.delta_r.compose(&so3_exp(&(j.r_bg * d_bg)));
    out.delta_v += j.v_bg * d_bg + j.v_ba * d_ba;
    out.delta_p += j.p_bg * d_bg + j.p_ba * d_ba;
    out.bias_used = ImuStatus::new(delta.bias_used.ba + d_ba, delta.bias_used.bg + d_bg);
    Ok(out)
}

/// [`apply_bias_correction_within`] at [`DEFAULT_TRUST_REGION`].
pub fn apply_bias_correction(
    delta: &PreintegratedDelta,
    d_bg: &Vector3<f64>,
    d_ba: &Vector3<f64>,
) -> Result<PreintegratedDelta> {
    apply_bias_correction_within(delta, d_bg, d_ba, DEFAULT_TRUST_REGION)
}

/// Body-frame state needed to turn a delta into a relative pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    /// Velocity at the start of the interval, in the body frame at that time.
    pub v0: Vector3<f64>,
    /// Gravity in the world frame, m/s².
    pub gravity: Vector3<f64>,
    /// Body-to-world rotation at the start of the interval.
    pub frame0_rotation: Rotation,
}

impl Kinematics {
    /// Translation the body would undergo with zero specific force.
    pub fn ballistic_translation(&self, dt: f64) -> Vector3<f64> {
        self.v0 * dt + 0.5 * self.frame0_rotation.inverse().rotate(&self.gravity) * dt * dt
    }
}

/// Relative pose of the body at the end of the interval, expressed in the
/// body frame at its start.
pub fn delta_to_relative_transform(delta: &PreintegratedDelta, kin: &Kinematics) -> RigidTransform {
    RigidTransform::new(
        delta.delta_r,
        delta.delta_p + kin.ballistic_translation(delta.dt_total),
    )
}

pub fn delta_to_relative_se3(
    delta: &PreintegratedDelta,
    v0: &Vector3<f64>,
    gravity: &Vector3<f64>,
    frame0_rotation: &Rotation,
) -> Se3Tangent {
    let kin = Kinematics {
        v0: *v0,
        gravity: *gravity,
        frame0_rotation: *frame0_rotation,
    };
    delta_to_relative_transform(delta, &kin).log()
}
