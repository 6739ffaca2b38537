use nalgebra::Vector3;

use super::{ControllerGains, ReferenceSetpoint};
use crate::allocation::DesiredWrench;
use crate::math::{attitude_error, skew, E3};
use crate::sim::{FullSystemState, PayloadParams};

/// PD plus feedforward on the payload pose.
///
/// ```text
/// F_d = m0 (p̈0r + g e3 − kp e_p − kd e_v)
/// M_d = J0 (−kR e_R − kΩ e_Ω) + Ω0 × J0 Ω0 − J0 (Ω̂0 Rᵀ Rr Ωr − Rᵀ Rr Ω̇r)
/// ```
pub fn payload_wrench(
    state: &FullSystemState,
    reference: &ReferenceSetpoint,
    payload: &PayloadParams,
    gains: &ControllerGains,
    gravity: f64,
) -> DesiredWrench {
    let m0 = payload.mass;
    let e_p = state.p0 - reference.p0r;
    let e_v = state.v0 - reference.dp0r;
    let force = m0 * (reference.ddp0r + gravity * E3 - gains.kp_pos * e_p - gains.kd_pos * e_v);
    if !payload.is_rigid() {
        return DesiredWrench::force(force);
    }
    let j0 = &payload.inertia;
    let w0 = state.w0;
    let rel = state.r0.transpose() * reference.r0r;
    let e_r = attitude_error(&state.r0, &reference.r0r);
    let e_w = w0 - rel * reference.w0r;
    let feedforward: Vector3<f64> =
        w0.cross(&(j0 * w0)) - j0 * (skew(&w0) * rel * reference.w0r - rel * reference.dw0r);
    let moment = j0 * (-gains.kp_rot * e_r - gains.kd_rot * e_w) + feedforward;
    DesiredWrench { force, moment }
}
