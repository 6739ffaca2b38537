//! Three-loop cascaded controller: payload wrench, per-cable force tracking
//! and quadrotor attitude with motor mixing.

mod attitude;
mod cable;
mod wrench;

pub use attitude::{attitude_loop, desired_attitude};
pub use cable::{
    attachment_acceleration, cable_control, desired_direction, desired_directions, CableControl,
    PayloadAcceleration,
};
pub use wrench::payload_wrench;

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{CableForceSet, DesiredWrench, EPS_FORCE};
use crate::sim::{Actuation, FullSystemState, RigParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("force of norm {norm:e} N is too small to define a direction (robot {robot})")]
    DegenerateForce { robot: usize, norm: f64 },
    #[error("expected {expected} cable forces, got {got}")]
    ForceCount { expected: usize, got: usize },
    #[error("expected {expected} yaw references, got {got}")]
    YawCount { expected: usize, got: usize },
}

/// Payload reference and per-robot yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSetpoint {
    pub p0r: Vector3<f64>,
    pub dp0r: Vector3<f64>,
    pub ddp0r: Vector3<f64>,
    pub r0r: Matrix3<f64>,
    /// Body frame angular velocity and acceleration; zero for point masses.
    pub w0r: Vector3<f64>,
    pub dw0r: Vector3<f64>,
    pub yaw: Vec<f64>,
}

impl ReferenceSetpoint {
    /// Stationary reference at `p0r` with level payload and zero yaw.
    pub fn hover(p0r: Vector3<f64>, n: usize) -> Self {
        Self {
            p0r,
            dp0r: Vector3::zeros(),
            ddp0r: Vector3::zeros(),
            r0r: Matrix3::identity(),
            w0r: Vector3::zeros(),
            dw0r: Vector3::zeros(),
            yaw: vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        let v = |x: &Vector3<f64>| x.iter().all(|c| c.is_finite());
        v(&self.p0r)
            && v(&self.dp0r)
            && v(&self.ddp0r)
            && self.r0r.iter().all(|c| c.is_finite())
            && v(&self.w0r)
            && v(&self.dw0r)
            && self.yaw.iter().all(|c| c.is_finite())
    }
}

/// Feedback gains. Translational and attitude gains are per unit mass or
/// inertia, so the same set works across payloads and airframes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    pub kp_pos: f64,
    pub kd_pos: f64,
    pub kp_rot: f64,
    pub kd_rot: f64,
    pub kq: f64,
    pub kw: f64,
    pub k_r: f64,
    pub k_omega: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_pos: 6.25,
            kd_pos: 5.0,
            kp_rot: 16.0,
            kd_rot: 8.0,
            kq: 40.0,
            kw: 12.0,
            k_r: 900.0,
            k_omega: 50.0,
        }
    }
}

impl ControllerGains {
    pub fn zero() -> Self {
        Self {
            kp_pos: 0.0,
            kd_pos: 0.0,
            kp_rot: 0.0,
            kd_rot: 0.0,
            kq: 0.0,
            kw: 0.0,
            k_r: 0.0,
            k_omega: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.kp_pos,
            self.kd_pos,
            self.kp_rot,
            self.kd_rot,
            self.kq,
            self.kw,
            self.k_r,
            self.k_omega,
        ]
        .iter()
        .all(|g| g.is_finite() && *g >= 0.0)
    }
}

/// Which payload acceleration the cable loops feed forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedforward {
    /// The acceleration the desired wrench asks for. The robots then carry
    /// their share of the payload's commanded motion.
    #[default]
    Commanded,
    /// The reference trajectory's acceleration only.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSettings {
    pub gains: ControllerGains,
    pub feedforward: Feedforward,
}

/// Commands for one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub thrust: f64,
    pub torque: Vector3<f64>,
    /// Squared rotor rates after clamping.
    pub motor_rates: Vector4<f64>,
    pub saturated: bool,
}

impl ControlOutput {
    pub fn actuation(&self) -> Actuation {
        Actuation {
            thrust: self.thrust,
            torque: self.torque,
        }
    }
}

/// One control tick for every robot given the desired wrench and the
/// allocated cable forces. `directions` holds the desired cable directions
/// of the previous tick and is updated; a robot whose force is degenerate
/// keeps its old direction.
#[allow(clippy::too_many_arguments)]
pub fn control_step(
    state: &FullSystemState,
    reference: &ReferenceSetpoint,
    rig: &RigParams,
    gravity: f64,
    settings: &ControllerSettings,
    wrench: &DesiredWrench,
    forces: &CableForceSet,
    directions: &mut [Vector3<f64>],
) -> Result<Vec<ControlOutput>, ControllerError> {
    let n = rig.n();
    if forces.mu.len() != n || directions.len() != n {
        return Err(ControllerError::ForceCount {
            expected: n,
            got: forces.mu.len().min(directions.len()),
        });
    }
    if reference.yaw.len() != n {
        return Err(ControllerError::YawCount {
            expected: n,
            got: reference.yaw.len(),
        });
    }
    let acc = match settings.feedforward {
        Feedforward::Commanded => {
            PayloadAcceleration::commanded(wrench, state, &rig.payload, gravity)
        }
        Feedforward::Reference => PayloadAcceleration::reference(reference),
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mu = match desired_direction(&forces.mu[i], i) {
            Ok(d) => {
                directions[i] = d;
                forces.mu[i]
            }
            // Hold the previous direction with the force magnitude floored.
            Err(_) => directions[i] * EPS_FORCE,
        };
        let u = cable_control(
            state,
            rig,
            i,
            &mu,
            &directions[i],
            &acc,
            &settings.gains,
            gravity,
        );
        let r = &state.robots[i];
        let o = attitude_loop(
            &u.total(),
            &r.r,
            &r.omega,
            reference.yaw[i],
            &rig.robots[i],
            &settings.gains,
        )
        .map_err(|e| match e {
            ControllerError::DegenerateForce { norm, .. } => {
                ControllerError::DegenerateForce { robot: i, norm }
            }
            other => other,
        })?;
        out.push(o);
    }
    Ok(out)
}

/// State in which the given cable forces hold the payload at rest: each cable
/// points along its force and each quadrotor's thrust axis carries the cable
/// force plus its own weight.
pub fn hover_state(
    rig: &RigParams,
    p0: Vector3<f64>,
    r0: Matrix3<f64>,
    forces: &CableForceSet,
    yaw: &[f64],
    gravity: f64,
) -> Result<FullSystemState, ControllerError> {
    let n = rig.n();
    if forces.mu.len() != n {
        return Err(ControllerError::ForceCount {
            expected: n,
            got: forces.mu.len(),
        });
    }
    if yaw.len() != n {
        return Err(ControllerError::YawCount {
            expected: n,
            got: yaw.len(),
        });
    }
    let mut state = FullSystemState::at_rest(p0, n);
    state.r0 = r0;
    for (i, r) in state.robots.iter_mut().enumerate() {
        r.q = -desired_direction(&forces.mu[i], i)?;
        let u = forces.mu[i] + rig.robots[i].mass * gravity * crate::math::E3;
        r.r = desired_attitude(&u, yaw[i]);
    }
    Ok(state)
}
