//! IMU bias estimation from reference relative poses.
//!
//! For each interval the preintegrated pose is compared with a trusted
//! relative pose (stereo or fused):
//!
//! ```text
//! e_r = Log(ΔR(S)ᵀ · R_ref)
//! e_p = p_ref - p_imu(S)
//! cost = ρ([e_r e_p] · Σ_I · [e_r e_p]ᵀ)
//! ```
//!
//! `ρ` is the Huber function on a squared norm, `ρ(s) = s` for `s ≤ δ²` and
//! `2δ√s - δ²` above. `Σ_I` is the information of the preintegrated
//! rotation/position marginal, evaluated once at the prior bias.
//!
//! The bias is found by Levenberg-Marquardt on iteratively reweighted normal
//! equations. Every trial bias is re-preintegrated from the raw samples, so
//! the first-order bias correction is never extrapolated.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu::{ImuNoiseModel, ImuSample, ImuStatus};
use crate::preint::{delta_to_relative_transform, preintegrate, Kinematics, Matrix6, PreintegratedDelta};
use crate::se3::{so3_left_jacobian_inv, so3_log, RigidTransform};

type Vector6 = SVector<f64, 6>;
type Matrix6x6 = SMatrix<f64, 6, 6>;

/// Damping beyond which a stalled solve is abandoned.
const MAX_DAMPING: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatusUpdateParams {
    pub huber_delta: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the norm of an accepted bias step.
    pub step_tol: f64,
    pub damping_init: f64,
}

impl Default for StatusUpdateParams {
    fn default() -> Self {
        StatusUpdateParams {
            huber_delta: 1.345,
            max_iterations: 50,
            step_tol: 1e-12,
            damping_init: 1e-4,
        }
    }
}

impl StatusUpdateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "huber_delta must be positive, got {}",
                self.huber_delta
            )));
        }
        if !(self.step_tol >= 0.0 && self.damping_init > 0.0) {
            return Err(Error::InvalidArgument(
                "step_tol must be non-negative and damping_init positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn huber(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        s
    } else {
        2.0 * delta * s.sqrt() - delta * delta
    }
}

/// `dρ/ds`.
pub fn huber_weight(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        1.0
    } else {
        delta / s.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseResidual {
    pub e_r: Vector3<f64>,
    pub e_p: Vector3<f64>,
    pub weighted_cost: f64,
}

impl PoseResidual {
    pub fn stacked(&self) -> Vector6 {
        Vector6::new(self.e_r.x, self.e_r.y, self.e_r.z, self.e_p.x, self.e_p.y, self.e_p.z)
    }
}

/// Residual between the preintegrated relative pose and `reference`.
pub fn pose_residual(
    delta: &PreintegratedDelta,
    reference: &RigidTransform,
    kin: &Kinematics,
    information: &Matrix6,
    huber_delta: f64,
) -> PoseResidual {
    let imu = delta_to_relative_transform(delta, kin);
    let e_r = so3_log(&imu.rotation.inverse().compose(&reference.rotation));
    let e_p = reference.translation - imu.translation;
    let r = Vector6::new(e_r.x, e_r.y, e_r.z, e_p.x, e_p.y, e_p.z);
    let s = r.dot(&(information * r)).max(0.0);
    PoseResidual {
        e_r,
        e_p,
        weighted_cost: huber(s, huber_delta),
    }
}

/// One interval of IMU data with its reference pose.
#[derive(Clone, Copy, Debug)]
pub struct StatusPair<'a> {
    pub samples: &'a [ImuSample],
    /// Relative body pose over the interval, end frame expressed in start frame.
    pub reference: RigidTransform,
    pub kinematics: Kinematics,
}

/// Evaluates the objective over a window of pairs at a fixed bias.
pub struct StatusProblem<'a> {
    pairs: Vec<StatusPair<'a>>,
    information: Vec<Matrix6>,
    noise: ImuNoiseModel,
    huber_delta: f64,
}

struct Evaluation {
    cost: f64,
    /// `Σ w Jᵀ Σ_I J` and `Σ w Jᵀ Σ_I r`, unknowns ordered `(bg, ba)`.
    normal: Matrix6x6,
    rhs: Vector6,
}

impl<'a> StatusProblem<'a> {
    /// Fixes the information matrices at `prior`.
    pub fn new(
        pairs: Vec<StatusPair<'a>>,
        prior: &ImuStatus,
        noise: &ImuNoiseModel,
        huber_delta: f64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("status update needs at least one interval"));
        }
        let information = pairs
            .iter()
            .map(|p| preintegrate(p.samples, prior, noise).map(|d| d.information()))
            .collect::<Result<Vec<_>>>()?;
        Ok(StatusProblem {
            pairs,
            information,
            noise: *noise,
            huber_delta,
        })
    }

    pub fn residuals(&self, status: &ImuStatus) -> Result<Vec<PoseResidual>> {
        self.pairs
            .iter()
            .zip(&self.information)
            .map(|(p, info)| {
                let d = preintegrate(p.samples, status, &self.noise)?;
                Ok(pose_residual(&d, &p.reference, &p.kinematics, info, self.huber_delta))
            })
            .collect()
    }

    pub fn objective(&self, status: &ImuStatus) -> Result<f64> {
        Ok(self.residuals(status)?.iter().map(|r| r.weighted_cost).sum())
    }

    /// Gradient with respect to `(bg, ba)`.
    pub fn gradient(&self, status: &ImuStatus) -> Result<Vector6> {
        Ok(2.0 * self.evaluate(status)?.rhs)
    }

    fn evaluate(&self, status: &ImuStatus) -> Result<Evaluation> {
        let mut cost = 0.0;
        let mut normal = Matrix6x6::zeros();
        let mut rhs = Vector6::zeros();
        for (p, info) in self.pairs.iter().zip(&self.information) {
            let d = preintegrate(p.samples, status, &self.noise)?;
            let res = pose_residual(&d, &p.reference, &p.kinematics, info, self.huber_delta);
            let r = res.stacked();
            let s = r.dot(&(info * r)).max(0.0);
            let w = huber_weight(s, self.huber_delta);
            let j = residual_jacobian(&d, &res.e_r);
            let jt_info = j.transpose() * info;
            normal += w * jt_info * j;
            rhs += w * jt_info * r;
            cost += res.weighted_cost;
        }
        Ok(Evaluation { cost, normal, rhs })
    }
}

/// `∂[e_r e_p]/∂(bg, ba)`.
fn residual_jacobian(d: &PreintegratedDelta, e_r: &Vector3<f64>) -> Matrix6x6 {
    let j = &d.jacobian_bias;
    let mut m = Matrix6x6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-so3_left_jacobian_inv(e_r) * j.r_bg));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-j.p_bg));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-j.p_ba));
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatusUpdateOutcome {
    pub status: ImuStatus,
    pub converged: bool,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Objective after the start and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// Single-interval update.
pub fn update_status(
    samples: &[ImuSample],
    prior: &ImuStatus,
    reference: &RigidTransform,
    kinematics: &Kinematics,
    noise: &ImuNoiseModel,
    params: &StatusUpdateParams,
) -> Result<StatusUpdateOutcome> {
    let pair = StatusPair {
        samples,
        reference: *reference,
        kinematics: *kinematics,
    };
    update_status_window(&[pair], prior, noise, params)
}

/// Joint update over several intervals sharing one bias.
pub fn update_status_window(
    pairs: &[StatusPair<'_>],
    prior: &ImuStatus,
    noise: &ImuNoiseModel,
    params: &StatusUpdateParams,
) -> Result<StatusUpdateOutcome> {
    params.validate()?;
    let problem = StatusProblem::new(pairs.to_vec(), prior, noise, params.huber_delta)?;
    minimize(&problem, prior, params)
}

fn minimize(problem: &StatusProblem<'_>, prior: &ImuStatus, params: &StatusUpdateParams) -> Result<StatusUpdateOutcome> {
    let mut x = *prior;
    let mut eval = problem.evaluate(&x)?;
    let initial_cost = eval.cost;
    let mut history = vec![eval.cost];
    let mut lambda = params.damping_init;
    let mut converged = eval.cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < params.max_iterations {
        iterations += 1;
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut a = eval.normal;
            for i in 0..6 {
                a[(i, i)] += lambda * eval.normal[(i, i)].max(1e-12);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -ch.solve(&eval.rhs);
            if !step.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial = ImuStatus::new(
                x.ba + Vector3::new(step[3], step[4], step[5]),
                x.bg + Vector3::new(step[0], step[1], step[2]),
            );
            let trial_eval = problem.evaluate(&trial)?;
            if trial_eval.cost < eval.cost {
                x = trial;
                eval = trial_eval;
                history.push(eval.cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step.norm() < params.step_tol || eval.cost == 0.0 {
                    converged = true;
                }
                break;
            }
            if step.norm() < params.step_tol {
                // No representable improvement is left.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted && !converged {
            if eval.normal.iter().all(|v| *v == 0.0) {
                return Err(Error::Singular("bias is unobservable from these intervals"));
            }
            converged = eval.rhs.norm() <= 1e-12 * eval.normal.norm().max(1.0);
            break;
        }
    }
    Ok(StatusUpdateOutcome {
        status: x,
        converged,
        iterations,
        initial_cost,
        final_cost: eval.cost,
        cost_history: history,
    })
}
