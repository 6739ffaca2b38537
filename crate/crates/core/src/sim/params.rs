use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("robot {robot}: {what}")]
    Robot { robot: usize, what: String },
    #[error("payload: {0}")]
    Payload(String),
    #[error("simulation config: {0}")]
    Config(String),
}

/// Physical parameters of one quadrotor and its cable.
///
/// The actuation matrix maps the four squared motor rates to the body
/// wrench `(f, τx, τy, τz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia_diag: Vector3<f64>,
    pub actuation: Matrix4<f64>,
    pub motor_min: f64,
    pub motor_max: f64,
    pub safety_radius: f64,
    pub cable_length: f64,
    /// Cable attachment point in the payload frame.
    pub attachment: Vector3<f64>,
}

/// Crazyflie 2.1 rigid-body constants.
pub mod crazyflie {
    pub const MASS: f64 = 0.034;
    pub const INERTIA: [f64; 3] = [16.571710e-6, 16.655602e-6, 29.261652e-6];
    /// Thrust coefficient, N per (rad/s)².
    pub const KF: f64 = 2.88e-8;
    /// Drag-torque to thrust ratio, m.
    pub const KM_OVER_KF: f64 = 0.006;
    /// Rotor distance from the body center, m.
    pub const ARM: f64 = 0.046;
    /// Maximum rotor speed, rad/s.
    pub const MAX_RATE: f64 = 2272.0;
}

impl QuadrotorParams {
    /// X-configuration actuation matrix with rotors on the body diagonals.
    pub fn x_actuation(kf: f64, km_over_kf: f64, arm: f64) -> Matrix4<f64> {
        let d = arm / std::f64::consts::SQRT_2;
        // (x, y, spin) per rotor; positive spin produces +z reaction torque.
        let rotors = [(d, -d, -1.0), (-d, -d, 1.0), (-d, d, -1.0), (d, d, 1.0)];
        let mut b = Matrix4::zeros();
        for (k, (x, y, s)) in rotors.iter().enumerate() {
            b[(0, k)] = kf;
            b[(1, k)] = kf * y;
            b[(2, k)] = -kf * x;
            b[(3, k)] = kf * km_over_kf * s;
        }
        b
    }

    pub fn crazyflie(cable_length: f64, attachment: Vector3<f64>, safety_radius: f64) -> Self {
        use crazyflie::*;
        Self {
            mass: MASS,
            inertia_diag: Vector3::from(INERTIA),
            actuation: Self::x_actuation(KF, KM_OVER_KF, ARM),
            motor_min: 0.0,
            motor_max: MAX_RATE * MAX_RATE,
            safety_radius,
            cable_length,
            attachment,
        }
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia_diag)
    }

    /// Largest collective thrust the motors can produce.
    pub fn max_thrust(&self) -> f64 {
        (self.actuation * Vector4::repeat(self.motor_max))[0]
    }

    /// Squared motor rates for a wrench, clamped to the limits. The boolean is
    /// set when any rate had to be clamped.
    pub fn mix(&self, wrench: &Vector4<f64>) -> (Vector4<f64>, bool) {
        let inv = self
            .actuation
            .try_inverse()
            .expect("actuation matrix validated as invertible");
        let raw = inv * wrench;
        let clamped = raw.map(|w| w.clamp(self.motor_min, self.motor_max));
        (clamped, clamped != raw)
    }

    pub fn wrench_from_rates(&self, rates: &Vector4<f64>) -> Vector4<f64> {
        self.actuation * rates
    }

    fn validate(&self, robot: usize) -> Result<(), ParamError> {
        let err = |what: &str| {
            Err(ParamError::Robot {
                robot,
                what: what.to_string(),
            })
        };
        if !(self.mass > 0.0) {
            return err("mass must be positive");
        }
        if self.inertia_diag.iter().any(|&j| !(j > 0.0)) {
            return err("inertia must be positive");
        }
        if !(self.cable_length > 0.0) {
            return err("cable length must be positive");
        }
        if !(self.safety_radius > 0.0) {
            return err("safety radius must be positive");
        }
        if self.safety_radius >= 2.0 * self.cable_length {
            return err("safety radius must be below twice the cable length");
        }
        if !(self.motor_max > self.motor_min) || self.motor_min < 0.0 {
            return err("motor limits must satisfy 0 <= min < max");
        }
        let svd = self.actuation.svd(false, false);
        if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
            return err("actuation matrix is singular");
        }
        if !self.attachment.iter().all(|v| v.is_finite()) {
            return err("attachment point is not finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    PointMass,
    RigidBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadParams {
    pub kind: PayloadKind,
    pub mass: f64,
    /// Ignored for point masses.
    pub inertia: Matrix3<f64>,
}

impl PayloadParams {
    pub fn point_mass(mass: f64) -> Self {
        Self {
            kind: PayloadKind::PointMass,
            mass,
            inertia: Matrix3::zeros(),
        }
    }

    pub fn rigid_body(mass: f64, inertia: Matrix3<f64>) -> Self {
        Self {
            kind: PayloadKind::RigidBody,
            mass,
            inertia,
        }
    }

    pub fn is_rigid(&self) -> bool {
        self.kind == PayloadKind::RigidBody
    }
}

/// Payload plus the robots attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigParams {
    pub payload: PayloadParams,
    pub robots: Vec<QuadrotorParams>,
}

impl RigParams {
    pub fn n(&self) -> usize {
        self.robots.len()
    }

    /// Attachment point used in kinematics; point masses ignore the stored one.
    pub fn attachment(&self, i: usize) -> Vector3<f64> {
        if self.payload.is_rigid() {
            self.robots[i].attachment
        } else {
            Vector3::zeros()
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.payload.mass + self.robots.iter().map(|r| r.mass).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.robots.is_empty() {
            return Err(ParamError::Payload("at least one robot is required".into()));
        }
        if !(self.payload.mass > 0.0) {
            return Err(ParamError::Payload("mass must be positive".into()));
        }
        if self.payload.is_rigid() {
            let j = &self.payload.inertia;
            if (j - j.transpose()).amax() > 1e-12 * j.amax().max(1.0) {
                return Err(ParamError::Payload("inertia must be symmetric".into()));
            }
            if j.symmetric_eigenvalues().min() <= 0.0 {
                return Err(ParamError::Payload(
                    "inertia must be positive definite".into(),
                ));
            }
        }
        for (i, r) in self.robots.iter().enumerate() {
            r.validate(i)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Seed for any stochastic scenario element.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            gravity: 9.81,
            integrator: Integrator::ExplicitEuler,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.dt > 0.0 && self.dt <= 2e-3) {
            return Err(ParamError::Config(format!(
                "dt must be in (0, 2 ms], got {}",
                self.dt
            )));
        }
        if !self.gravity.is_finite() {
            return Err(ParamError::Config("gravity must be finite".into()));
        }
        Ok(())
    }
}
