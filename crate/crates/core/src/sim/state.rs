use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::params::RigParams;
use crate::math::{orthonormality_error, skew, E3};

/// Cable and quadrotor attitude state of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Unit vector from the quadrotor toward its attachment point.
    pub q: Vector3<f64>,
    /// Cable angular velocity, world frame, orthogonal to `q`.
    pub w: Vector3<f64>,
    pub r: Matrix3<f64>,
    /// Body rates.
    pub omega: Vector3<f64>,
}

impl RobotState {
    /// Cable hanging straight down from a level quadrotor.
    pub fn hanging() -> Self {
        Self {
            q: -E3,
            w: Vector3::zeros(),
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }
}

/// Payload pose and twist plus per-robot cable and attitude states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSystemState {
    pub p0: Vector3<f64>,
    pub v0: Vector3<f64>,
    /// Payload to world rotation; identity for point masses.
    pub r0: Matrix3<f64>,
    /// Payload body angular velocity.
    pub w0: Vector3<f64>,
    pub robots: Vec<RobotState>,
}

impl FullSystemState {
    /// Payload at rest at `p0` with every cable hanging vertically.
    pub fn at_rest(p0: Vector3<f64>, n: usize) -> Self {
        Self {
            p0,
            v0: Vector3::zeros(),
            r0: Matrix3::identity(),
            w0: Vector3::zeros(),
            robots: vec![RobotState::hanging(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.robots.len()
    }

    pub fn is_finite(&self) -> bool {
        let v = |x: &Vector3<f64>| x.iter().all(|c| c.is_finite());
        let m = |x: &Matrix3<f64>| x.iter().all(|c| c.is_finite());
        v(&self.p0)
            && v(&self.v0)
            && m(&self.r0)
            && v(&self.w0)
            && self
                .robots
                .iter()
                .all(|r| v(&r.q) && v(&r.w) && m(&r.r) && v(&r.omega))
    }

    /// Worst violation of the manifold invariants: unit cables, cable rates
    /// orthogonal to cables, orthonormal rotations.
    pub fn manifold_error(&self) -> f64 {
        let mut e = orthonormality_error(&self.r0);
        for r in &self.robots {
            e = e
                .max((r.q.norm() - 1.0).abs())
                .max(r.q.dot(&r.w).abs())
                .max(orthonormality_error(&r.r));
        }
        e
    }

    /// Flattened state vector, for distances between states.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(18 + 24 * self.n());
        out.extend(self.p0.iter());
        out.extend(self.v0.iter());
        out.extend(self.r0.iter());
        out.extend(self.w0.iter());
        for r in &self.robots {
            out.extend(r.q.iter());
            out.extend(r.w.iter());
            out.extend(r.r.iter());
            out.extend(r.omega.iter());
        }
        out
    }
}

/// `p_i = p0 + R0 p_ai − l_i q_i`
pub fn quad_position(state: &FullSystemState, rig: &RigParams, i: usize) -> Vector3<f64> {
    state.p0 + state.r0 * rig.attachment(i) - rig.robots[i].cable_length * state.robots[i].q
}

/// `ṗ_i = ṗ0 + R0 ŵ0 p_ai − l_i (w_i × q_i)`
pub fn quad_velocity(state: &FullSystemState, rig: &RigParams, i: usize) -> Vector3<f64> {
    let r = &state.robots[i];
    state.v0 + state.r0 * skew(&state.w0) * rig.attachment(i)
        - rig.robots[i].cable_length * r.w.cross(&r.q)
}

/// World-frame attachment point of cable `i`.
pub fn attachment_position(state: &FullSystemState, rig: &RigParams, i: usize) -> Vector3<f64> {
    state.p0 + state.r0 * rig.attachment(i)
}

/// Smallest distance between any two quadrotors, with the pair achieving it.
pub fn min_pairwise_distance(
    state: &FullSystemState,
    rig: &RigParams,
) -> Option<(f64, usize, usize)> {
    let pos: Vec<_> = (0..rig.n()).map(|i| quad_position(state, rig, i)).collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = (pos[i] - pos[j]).norm();
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, i, j));
            }
        }
    }
    best
}

/// Kinetic plus gravitational potential energy of payload and quadrotors,
/// with the potential datum at `z = 0`.
pub fn mechanical_energy(state: &FullSystemState, rig: &RigParams, gravity: f64) -> f64 {
    let m0 = rig.payload.mass;
    let mut e = 0.5 * m0 * state.v0.norm_squared() + m0 * gravity * state.p0.z;
    if rig.payload.is_rigid() {
        e += 0.5 * state.w0.dot(&(rig.payload.inertia * state.w0));
    }
    for (i, robot) in rig.robots.iter().enumerate() {
        let v = quad_velocity(state, rig, i);
        let p = quad_position(state, rig, i);
        let om = &state.robots[i].omega;
        e += 0.5 * robot.mass * v.norm_squared()
            + 0.5 * om.dot(&robot.inertia_diag.component_mul(om))
            + robot.mass * gravity * p.z;
    }
    e
}
