use nalgebra::{Matrix3, Vector3, Vector4};

use super::{ControlOutput, ControllerError, ControllerGains};
use crate::allocation::EPS_FORCE;
use crate::math::{attitude_error, E3};
use crate::sim::QuadrotorParams;

/// Rotation whose third axis is along `u` with heading `yaw`.
pub fn desired_attitude(u: &Vector3<f64>, yaw: f64) -> Matrix3<f64> {
    let z = u.normalize();
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut y = z.cross(&heading);
    if y.norm() < 1e-9 {
        // Thrust along the heading, so the side axis is already orthogonal.
        y = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    }
    let y = y.normalize();
    let x = y.cross(&z);
    Matrix3::from_columns(&[x, y, z])
}

/// Geometric attitude loop and motor mixing for one quadrotor.
///
/// `f = uᵀ R e3`, `τ = J (−kR e_R − kΩ Ω) + Ω × J Ω`, with the desired body
/// rates taken as zero.
pub fn attitude_loop(
    u: &Vector3<f64>,
    r: &Matrix3<f64>,
    omega: &Vector3<f64>,
    yaw: f64,
    params: &QuadrotorParams,
    gains: &ControllerGains,
) -> Result<ControlOutput, ControllerError> {
    let norm = u.norm();
    if !(norm > EPS_FORCE) {
        return Err(ControllerError::DegenerateForce { robot: 0, norm });
    }
    let r_d = desired_attitude(u, yaw);
    let thrust = u.dot(&(r * E3)).max(0.0);
    let e_r = attitude_error(r, &r_d);
    let j = params.inertia_diag;
    let torque = (-gains.k_r * e_r - gains.k_omega * omega).component_mul(&j)
        + omega.cross(&j.component_mul(omega));
    let (motor_rates, saturated) = params.mix(&Vector4::new(thrust, torque.x, torque.y, torque.z));
    Ok(ControlOutput {
        thrust,
        torque,
        motor_rates,
        saturated,
    })
}
