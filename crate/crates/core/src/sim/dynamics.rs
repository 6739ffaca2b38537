use nalgebra::{Matrix3, Matrix6, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{RigParams, SimConfig};
use super::state::FullSystemState;
use crate::math::{orthonormalize, skew, E3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {time:.4} s")]
    NonFiniteState { time: f64 },
    #[error("expected {expected} actuation inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("singular payload mass matrix")]
    SingularMassMatrix,
}

/// Collective thrust and body torque of one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Actuation {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

impl Actuation {
    pub fn wrench(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn from_wrench(w: &Vector4<f64>) -> Self {
        Self {
            thrust: w[0],
            torque: Vector3::new(w[1], w[2], w[3]),
        }
    }
}

/// Time derivatives of the velocity-level states plus the cable tensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerations {
    pub a0: Vector3<f64>,
    /// Payload body angular acceleration (zero for point masses).
    pub alpha0: Vector3<f64>,
    /// Cable tension; positive when the cable pulls the quadrotor toward the
    /// payload.
    pub tension: Vec<f64>,
    pub w_dot: Vec<Vector3<f64>>,
    pub omega_dot: Vec<Vector3<f64>>,
}

/// Result of one integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Stepped {
    pub state: FullSystemState,
    /// Number of robots whose motor commands were clamped.
    pub saturated: usize,
}

/// Clamps each command to what the motors can produce.
pub fn apply_motor_limits(rig: &RigParams, inputs: &[Actuation]) -> (Vec<Actuation>, usize) {
    let mut saturated = 0;
    let out = rig
        .robots
        .iter()
        .zip(inputs)
        .map(|(p, a)| {
            let (rates, clamped) = p.mix(&a.wrench());
            saturated += clamped as usize;
            Actuation::from_wrench(&p.wrench_from_rates(&rates))
        })
        .collect();
    (out, saturated)
}

/// Newton–Euler dynamics of the taut-cable system. Each cable is a massless
/// rod, so its tension is the constraint force that keeps the quadrotor at
/// distance `l_i` from the attachment point; solving for the tensions leaves a
/// linear system in the payload accelerations.
pub fn accelerations(
    state: &FullSystemState,
    rig: &RigParams,
    gravity: f64,
    inputs: &[Actuation],
) -> Result<Accelerations, SimError> {
    let n = rig.n();
    let m0 = rig.payload.mass;
    let rigid = rig.payload.is_rigid();
    let r0 = &state.r0;
    let g = gravity * E3;

    let mut thrust = Vec::with_capacity(n);
    let mut centripetal = Vec::with_capacity(n);
    let mut bias = Vec::with_capacity(n);
    let mut mass_matrix = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    for k in 0..3 {
        mass_matrix[(k, k)] = m0;
    }
    rhs.fixed_rows_mut::<3>(0).copy_from(&(-m0 * g));
    if rigid {
        mass_matrix
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&rig.payload.inertia);
        let jw = rig.payload.inertia * state.w0;
        rhs.fixed_rows_mut::<3>(3)
            .copy_from(&(-state.w0.cross(&jw)));
    }

    for i in 0..n {
        let p = &rig.robots[i];
        let s = &state.robots[i];
        let rho = rig.attachment(i);
        let f = inputs[i].thrust * (s.r * E3);
        let c = r0 * state.w0.cross(&state.w0.cross(&rho));
        let b =
            p.mass * s.q.dot(&(c + g)) + p.mass * p.cable_length * s.w.norm_squared() - s.q.dot(&f);
        let qqt = p.mass * s.q * s.q.transpose();

        let mut tl = mass_matrix.fixed_view::<3, 3>(0, 0).into_owned();
        tl += qqt;
        mass_matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&tl);
        let mut r_top = rhs.fixed_rows::<3>(0).into_owned();
        r_top -= s.q * b;
        rhs.fixed_rows_mut::<3>(0).copy_from(&r_top);

        if rigid {
            let rho_hat = skew(&rho);
            let lever = rho_hat * r0.transpose();
            let coupling = -qqt * r0 * rho_hat;
            let tr = mass_matrix.fixed_view::<3, 3>(0, 3) + coupling;
            mass_matrix.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
            let bl = mass_matrix.fixed_view::<3, 3>(3, 0) + lever * qqt;
            mass_matrix.fixed_view_mut::<3, 3>(3, 0).copy_from(&bl);
            let br = mass_matrix.fixed_view::<3, 3>(3, 3) - lever * qqt * r0 * rho_hat;
            mass_matrix.fixed_view_mut::<3, 3>(3, 3).copy_from(&br);
            let r_bot = rhs.fixed_rows::<3>(3) - lever * s.q * b;
            rhs.fixed_rows_mut::<3>(3).copy_from(&r_bot);
        }
        thrust.push(f);
        centripetal.push(c);
        bias.push(b);
    }

    let (a0, alpha0) = if rigid {
        let x = mass_matrix
            .lu()
            .solve(&rhs)
            .ok_or(SimError::SingularMassMatrix)?;
        (
            x.fixed_rows::<3>(0).into_owned(),
            x.fixed_rows::<3>(3).into_owned(),
        )
    } else {
        let m: Matrix3<f64> = mass_matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let x = m
            .lu()
            .solve(&rhs.fixed_rows::<3>(0).into_owned())
            .ok_or(SimError::SingularMassMatrix)?;
        (x, Vector3::zeros())
    };

    let mut tension = Vec::with_capacity(n);
    let mut w_dot = Vec::with_capacity(n);
    let mut omega_dot = Vec::with_capacity(n);
    for i in 0..n {
        let p = &rig.robots[i];
        let s = &state.robots[i];
        let rho = rig.attachment(i);
        let acc_attach = a0 + r0 * alpha0.cross(&rho) + centripetal[i];
        tension.push(
            p.mass * s.q.dot(&(acc_attach + g)) + p.mass * p.cable_length * s.w.norm_squared()
                - s.q.dot(&thrust[i]),
        );
        w_dot.push(s.q.cross(&(acc_attach - thrust[i] / p.mass + g)) / p.cable_length);
        let j = p.inertia_diag;
        let jo = j.component_mul(&s.omega);
        omega_dot.push((inputs[i].torque - s.omega.cross(&jo)).component_div(&j));
    }
    Ok(Accelerations {
        a0,
        alpha0,
        tension,
        w_dot,
        omega_dot,
    })
}

/// Advances the state by one explicit Euler step, clamping motor commands and
/// projecting back onto the constraint manifold.
pub fn step(
    state: &FullSystemState,
    inputs: &[Actuation],
    rig: &RigParams,
    config: &SimConfig,
) -> Result<Stepped, SimError> {
    if inputs.len() != rig.n() {
        return Err(SimError::InputCount {
            expected: rig.n(),
            got: inputs.len(),
        });
    }
    let (limited, saturated) = apply_motor_limits(rig, inputs);
    let acc = accelerations(state, rig, config.gravity, &limited)?;
    let dt = config.dt;

    let mut next = state.clone();
    next.p0 += dt * state.v0;
    next.v0 += dt * acc.a0;
    if rig.payload.is_rigid() {
        next.r0 = orthonormalize(&(state.r0 + dt * state.r0 * skew(&state.w0)));
        next.w0 += dt * acc.alpha0;
    }
    for (i, r) in next.robots.iter_mut().enumerate() {
        let s = &state.robots[i];
        r.q = (s.q + dt * s.w.cross(&s.q)).normalize();
        let w = s.w + dt * acc.w_dot[i];
        r.w = w - r.q * r.q.dot(&w);
        r.r = orthonormalize(&(s.r + dt * s.r * skew(&s.omega)));
        r.omega = s.omega + dt * acc.omega_dot[i];
    }
    if !next.is_finite() {
        return Err(SimError::NonFiniteState { time: f64::NAN });
    }
    Ok(Stepped {
        state: next,
        saturated,
    })
}

/// Owns a state and advances it, tracking time and motor saturation.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub rig: RigParams,
    pub config: SimConfig,
    state: FullSystemState,
    time: f64,
    steps: u64,
    saturation_count: u64,
}

impl Simulator {
    pub fn new(rig: RigParams, config: SimConfig, state: FullSystemState) -> Self {
        Self {
            rig,
            config,
            state,
            time: 0.0,
            steps: 0,
            saturation_count: 0,
        }
    }

    pub fn state(&self) -> &FullSystemState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Robot-steps in which a motor command was clamped.
    pub fn saturation_count(&self) -> u64 {
        self.saturation_count
    }

    pub fn reset(&mut self, state: FullSystemState) {
        self.state = state;
        self.time = 0.0;
        self.steps = 0;
        self.saturation_count = 0;
    }

    pub fn step(&mut self, inputs: &[Actuation]) -> Result<(), SimError> {
        let out = step(&self.state, inputs, &self.rig, &self.config).map_err(|e| match e {
            SimError::NonFiniteState { .. } => SimError::NonFiniteState { time: self.time },
            other => other,
        })?;
        self.state = out.state;
        self.saturation_count += out.saturated as u64;
        self.steps += 1;
        self.time = self.steps as f64 * self.config.dt;
        Ok(())
    }
}
