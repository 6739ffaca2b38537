use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::protocol::TeleopCommand;
use crate::allocation::{AllocationError, FormationPreference, PresetTable};
use crate::controller::ReferenceSetpoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherLimits {
    /// m/s
    pub max_speed: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s³
    pub max_jerk: f64,
    /// Time to blend a formation preset in or out, s.
    pub preset_transition: f64,
}

impl Default for SmootherLimits {
    fn default() -> Self {
        Self {
            max_speed: 0.5,
            max_accel: 1.0,
            max_jerk: 5.0,
            preset_transition: 1.5,
        }
    }
}

// Cascade gains. The acceleration loop is critically damped (double pole
// at -8), so velocity steps do not overshoot.
const K_POS: f64 = 1.0;
const K_VEL: f64 = 4.0;
const K_ACC: f64 = 16.0;

/// Below this speed (m/s) a braking reference latches its hold point.
const STOPPED: f64 = 1e-3;

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Turns velocity commands and position targets into a reference whose
/// acceleration is continuous and bounded by `max_accel`.
///
/// A nonzero velocity command is tracked as is. When it drops to zero the
/// reference brakes and holds wherever it comes to rest. Nudges move the
/// hold point; nudges made while moving are applied once stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoother {
    pub limits: SmootherLimits,
    p: Vector3<f64>,
    v: Vector3<f64>,
    a: Vector3<f64>,
    anchor: Option<Vector3<f64>>,
    pending: Vector3<f64>,
    velocity: Vector3<f64>,
}

impl Smoother {
    pub fn new(start: Vector3<f64>, limits: SmootherLimits) -> Self {
        Self {
            limits,
            p: start,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
            anchor: Some(start),
            pending: Vector3::zeros(),
            velocity: Vector3::zeros(),
        }
    }

    /// Sets the commanded velocity, clamped to the speed limit.
    pub fn set_velocity(&mut self, v: Vector3<f64>) -> Vector3<f64> {
        self.velocity = clamp_norm(v, self.limits.max_speed);
        if self.velocity != Vector3::zeros() {
            self.anchor = None;
        }
        self.velocity
    }

    pub fn velocity_command(&self) -> Vector3<f64> {
        self.velocity
    }

    pub fn nudge(&mut self, d: Vector3<f64>) {
        match &mut self.anchor {
            Some(a) => *a += d,
            None => self.pending += d,
        }
    }

    /// Stops: zero velocity command, brake, hold where the reference stops.
    pub fn hold(&mut self) {
        self.velocity = Vector3::zeros();
        self.anchor = None;
    }

    /// Goes to `target` and holds there, dropping pending nudges.
    pub fn retarget(&mut self, target: Vector3<f64>) {
        self.velocity = Vector3::zeros();
        self.anchor = Some(target);
        self.pending = Vector3::zeros();
    }

    /// Point being held, if the reference has stopped.
    pub fn hold_point(&self) -> Option<Vector3<f64>> {
        self.anchor
    }

    pub fn position(&self) -> Vector3<f64> {
        self.p
    }

    pub fn advance(&mut self, dt: f64) {
        let lim = self.limits;
        if self.anchor.is_none() && self.velocity == Vector3::zeros() && self.v.norm() < STOPPED {
            self.anchor = Some(self.p + self.pending);
            self.pending = Vector3::zeros();
        }
        let v_des = match self.anchor {
            Some(target) => clamp_norm(K_POS * (target - self.p), lim.max_speed),
            None => self.velocity,
        };
        let a_des = clamp_norm(K_VEL * (v_des - self.v), lim.max_accel);
        let jerk = clamp_norm(K_ACC * (a_des - self.a), lim.max_jerk);
        self.a = clamp_norm(self.a + jerk * dt, lim.max_accel);
        self.v += self.a * dt;
        self.p += self.v * dt;
    }

    pub fn setpoint(&self, n: usize) -> ReferenceSetpoint {
        let mut r = ReferenceSetpoint::hover(self.p, n);
        r.dp0r = self.v;
        r.ddp0r = self.a;
        r
    }
}

/// What the operator has asked for: the smoothed payload reference, the
/// formation preset and the pause flag.
///
/// Presets are faded in and out rather than switched, since a step in the
/// preferred forces is a step in the allocation. The fade moves the fraction
/// `λ/(1+λ)` of the way from the unweighted optimum toward the preset
/// smoothly between zero and its final value.
#[derive(Debug, Clone)]
pub struct Operator {
    smoother: Smoother,
    home: Vector3<f64>,
    presets: PresetTable,
    /// Requested preset.
    preset: Option<String>,
    /// Preset being faded, and how far it is faded in (0 to 1).
    fading: Option<String>,
    fade: f64,
    preset_lambda: f64,
    continuity_lambda: f64,
    paused: bool,
}

impl Operator {
    pub fn new(
        home: Vector3<f64>,
        limits: SmootherLimits,
        presets: PresetTable,
        preset_lambda: f64,
        continuity_lambda: f64,
    ) -> Self {
        Self {
            smoother: Smoother::new(home, limits),
            home,
            presets,
            preset: None,
            fading: None,
            fade: 0.0,
            preset_lambda,
            continuity_lambda,
            paused: false,
        }
    }

    /// Applies a command. Unknown presets are rejected and change nothing.
    pub fn apply(&mut self, cmd: &TeleopCommand) -> Result<(), AllocationError> {
        match cmd {
            TeleopCommand::Velocity { vx, vy, vz } => {
                self.smoother.set_velocity(Vector3::new(*vx, *vy, *vz));
            }
            TeleopCommand::Nudge { dx, dy, dz } => self.smoother.nudge(Vector3::new(*dx, *dy, *dz)),
            TeleopCommand::Preset { name: Some(name) } => {
                self.presets.directions(name)?;
                self.preset = Some(name.clone());
            }
            TeleopCommand::Preset { name: None } => self.preset = None,
            TeleopCommand::Pause { paused } => self.paused = *paused,
            TeleopCommand::Reset => self.smoother.retarget(self.home),
        }
        Ok(())
    }

    /// Safety default after losing the operator.
    pub fn hold(&mut self) {
        self.smoother.hold();
    }

    pub fn advance(&mut self, dt: f64) {
        self.smoother.advance(dt);
        if self.fade == 0.0 {
            self.fading = self.preset.clone();
        }
        // Fade out before switching to a different preset.
        let target = if self.preset.is_some() && self.preset == self.fading {
            1.0
        } else {
            0.0
        };
        let step = dt / self.smoother.limits.preset_transition.max(dt);
        self.fade = if target > self.fade {
            (self.fade + step).min(1.0)
        } else {
            (self.fade - step).max(0.0)
        };
    }

    pub fn setpoint(&self, n: usize) -> ReferenceSetpoint {
        self.smoother.setpoint(n)
    }

    pub fn preference(&self) -> FormationPreference {
        match &self.fading {
            Some(name) if self.fade > 0.0 => {
                let x = self.fade;
                let smooth = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
                let share = smooth * self.preset_lambda / (1.0 + self.preset_lambda);
                self.presets
                    .preference(name, share / (1.0 - share))
                    .expect("presets are checked when selected")
            }
            _ => FormationPreference::previous(self.continuity_lambda),
        }
    }

    /// How far the active preset is faded in, 0 to 1.
    pub fn preset_fade(&self) -> f64 {
        self.fade
    }

    pub fn preset(&self) -> Option<&str> {
        self.preset.as_deref()
    }

    pub fn presets(&self) -> &PresetTable {
        &self.presets
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn velocity_command(&self) -> Vector3<f64> {
        self.smoother.velocity_command()
    }

    pub fn limits(&self) -> SmootherLimits {
        self.smoother.limits
    }
}
