use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ControllerError, ControllerGains, ReferenceSetpoint};
use crate::allocation::{CableForceSet, DesiredWrench, EPS_FORCE};
use crate::math::E3;
use crate::sim::{FullSystemState, PayloadParams, RigParams};

/// Unit direction of a cable force, pointing from the payload toward the
/// robot. The cable state `q` points the other way, so the desired cable
/// state is its negative.
pub fn desired_direction(mu: &Vector3<f64>, robot: usize) -> Result<Vector3<f64>, ControllerError> {
    let norm = mu.norm();
    if !(norm > EPS_FORCE) {
        return Err(ControllerError::DegenerateForce { robot, norm });
    }
    Ok(mu / norm)
}

pub fn desired_directions(mu: &CableForceSet) -> Result<Vec<Vector3<f64>>, ControllerError> {
    mu.mu
        .iter()
        .enumerate()
        .map(|(i, m)| desired_direction(m, i))
        .collect()
}

/// Payload acceleration the cable loops compensate for. Measured
/// acceleration is never used.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayloadAcceleration {
    pub linear: Vector3<f64>,
    /// Body frame angular acceleration.
    pub angular: Vector3<f64>,
}

impl PayloadAcceleration {
    /// Acceleration of the reference trajectory.
    pub fn reference(reference: &ReferenceSetpoint) -> Self {
        Self {
            linear: reference.ddp0r,
            angular: reference.dw0r,
        }
    }

    /// Acceleration the payload would have if it received exactly `wrench`.
    pub fn commanded(
        wrench: &DesiredWrench,
        state: &FullSystemState,
        payload: &PayloadParams,
        gravity: f64,
    ) -> Self {
        let linear = wrench.force / payload.mass - gravity * E3;
        if !payload.is_rigid() {
            return Self {
                linear,
                angular: Vector3::zeros(),
            };
        }
        let j0 = &payload.inertia;
        let w0 = state.w0;
        let angular = j0.try_inverse().map_or(Vector3::zeros(), |inv| {
            inv * (wrench.moment - w0.cross(&(j0 * w0)))
        });
        Self { linear, angular }
    }
}

/// World frame acceleration of attachment point `i` for the given payload
/// acceleration and the current payload rates.
pub fn attachment_acceleration(
    state: &FullSystemState,
    rig: &RigParams,
    i: usize,
    acc: &PayloadAcceleration,
) -> Vector3<f64> {
    if !rig.payload.is_rigid() {
        return acc.linear;
    }
    let rho = rig.attachment(i);
    let w0 = state.w0;
    acc.linear + state.r0 * (acc.angular.cross(&rho) + w0.cross(&w0.cross(&rho)))
}

/// Thrust vector split along and across the cable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableControl {
    pub parallel: Vector3<f64>,
    pub perpendicular: Vector3<f64>,
}

impl CableControl {
    pub fn total(&self) -> Vector3<f64> {
        self.parallel + self.perpendicular
    }
}

/// Thrust vector for robot `i` that delivers the component of `mu` along the
/// cable and steers the cable toward `direction`.
///
/// The parallel part cancels the cable's share of the attachment
/// acceleration `acc`, gravity and the centripetal load. The perpendicular part
/// commands the cable angular acceleration `−kq e_q − kw w` with the desired
/// cable rate taken as zero.
#[allow(clippy::too_many_arguments)]
pub fn cable_control(
    state: &FullSystemState,
    rig: &RigParams,
    i: usize,
    mu: &Vector3<f64>,
    direction: &Vector3<f64>,
    acc: &PayloadAcceleration,
    gains: &ControllerGains,
    gravity: f64,
) -> CableControl {
    let robot = &rig.robots[i];
    let (m, l) = (robot.mass, robot.cable_length);
    let s = &state.robots[i];
    let q = s.q;
    let q_d = -direction;
    let a = attachment_acceleration(state, rig, i, acc) + gravity * E3;

    let parallel = q * (q.dot(mu) + m * l * s.w.norm_squared() + m * q.dot(&a));

    let e_q = q_d.cross(&q);
    let w_dot = -gains.kq * e_q - gains.kw * s.w;
    let across = Matrix3::identity() - q * q.transpose();
    let perpendicular = m * l * q.cross(&w_dot) + m * (across * a);
    CableControl {
        parallel,
        perpendicular,
    }
}
