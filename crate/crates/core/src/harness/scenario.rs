//! Scenario files: versioned TOML describing a rig, controller, allocation
//! settings and a reference motion.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::trajectory::{Figure8, YawProfile};
use super::HarnessError;
use crate::allocation::{AllocationMode, AllocatorSettings};
use crate::controller::ControllerSettings;
use crate::qp::QpSettings;
use crate::sim::{PayloadParams, QuadrotorParams, RigParams, SimConfig};
use crate::teleop::{Obstacle, SmootherLimits, TeleopCommand};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: AllocationMode,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub sim: SimConfig,
    pub payload: PayloadSpec,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub controller: ControllerSettings,
    #[serde(default)]
    pub allocation: AllocationSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub start: StartSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub teleop: TeleopSpec,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Extra allocator instances fed the same inputs; any bitwise difference
    /// from the primary result is counted.
    #[serde(default)]
    pub replicas: usize,
    /// Tick log decimation.
    #[serde(default = "one")]
    pub log_every: usize,
}

fn default_mode() -> AllocationMode {
    AllocationMode::QpCascade
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadSpec {
    PointMass {
        mass: f64,
    },
    /// Principal inertia in the payload frame.
    RigidBody {
        mass: f64,
        inertia: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub cable_length: f64,
    #[serde(default = "default_radius")]
    pub safety_radius: f64,
    /// Payload frame; ignored for point masses.
    #[serde(default)]
    pub attachment: [f64; 3],
}

fn default_radius() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationSpec {
    pub lambda_s: f64,
    /// Continuity weight toward the previous solution.
    pub lambda: f64,
    /// Control ticks per allocation.
    pub every: usize,
    pub warm_start: bool,
    pub hold_periods: usize,
    pub qp: QpSettings,
    /// Formation preset active for the whole run.
    pub preset: Option<String>,
    pub preset_lambda: f64,
}

impl Default for AllocationSpec {
    fn default() -> Self {
        let base = AllocatorSettings::default();
        Self {
            lambda_s: base.lambda_s,
            lambda: 0.0,
            every: 1,
            warm_start: base.warm_start,
            hold_periods: base.hold_periods,
            qp: base.qp,
            preset: None,
            preset_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Give either `scale` or `peak_speed`.
    Figure8 {
        period: f64,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        peak_speed: Option<f64>,
        #[serde(default)]
        center: [f64; 3],
        #[serde(default)]
        ramp: f64,
        #[serde(default)]
        yaw: YawProfile,
    },
    Hover {
        position: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    /// Recorded operator commands replayed through the teleop smoother.
    TeleopLog {
        start: [f64; 3],
        commands: Vec<TimedCommand>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedCommand {
    pub t: f64,
    pub cmd: TeleopCommand,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartSpec {
    /// Payload offset from the reference at t = 0, m.
    pub offset: [f64; 3],
    /// Radius of an extra random offset drawn from the seed, m.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    /// Errors are averaged from this time on.
    pub start: f64,
    /// Abort once two robots are closer than half their combined radii.
    pub abort_on_contact: bool,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            start: 0.0,
            abort_on_contact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopSpec {
    pub limits: SmootherLimits,
    pub rate_hz: f64,
    /// Simulated seconds per wall-clock second.
    pub speed_factor: f64,
}

impl Default for TeleopSpec {
    fn default() -> Self {
        Self {
            limits: SmootherLimits::default(),
            rate_hz: 30.0,
            speed_factor: 1.0,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Scenario(m) => HarnessError::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Scenario(m));
        if self.version != SCENARIO_VERSION {
            return bad(format!("unsupported scenario version {}", self.version));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        self.sim.validate()?;
        self.rig()?.validate()?;
        if !self.controller.gains.is_valid() {
            return bad("controller gains must be finite and non-negative".into());
        }
        let a = &self.allocation;
        if a.every == 0 || self.log_every == 0 {
            return bad("allocation.every and log_every must be at least 1".into());
        }
        if !(a.lambda_s > 0.0 && a.lambda >= 0.0 && a.preset_lambda >= 0.0) {
            return bad("allocation weights must be non-negative and lambda_s positive".into());
        }
        if let Some(name) = &a.preset {
            crate::allocation::preset_table(&self.rig()?).directions(name)?;
        }
        if !(self.metrics.start >= 0.0 && self.metrics.start < self.duration) {
            return bad("metrics.start must lie inside the run".into());
        }
        let l = &self.teleop.limits;
        if !(l.max_speed > 0.0
            && l.max_accel > 0.0
            && l.max_jerk > 0.0
            && l.preset_transition >= 0.0)
        {
            return bad("teleop limits must be positive".into());
        }
        if !(self.teleop.rate_hz > 0.0 && self.teleop.speed_factor > 0.0) {
            return bad("teleop rate and speed factor must be positive".into());
        }
        if !(self.start.jitter >= 0.0) {
            return bad("start.jitter must be non-negative".into());
        }
        match &self.trajectory {
            TrajectorySpec::Figure8 {
                period,
                scale,
                peak_speed,
                ramp,
                ..
            } => {
                if !(*period > 0.0) || !(*ramp >= 0.0) {
                    return bad("figure8 needs period > 0 and ramp >= 0".into());
                }
                match (scale, peak_speed) {
                    (Some(s), None) if *s > 0.0 => {}
                    (None, Some(v)) if *v > 0.0 => {}
                    _ => {
                        return bad(
                            "figure8 needs exactly one positive `scale` or `peak_speed`".into()
                        )
                    }
                }
            }
            TrajectorySpec::Hover { .. } => {}
            TrajectorySpec::TeleopLog { commands, .. } => {
                if commands.windows(2).any(|w| w[1].t < w[0].t) {
                    return bad("teleop commands must be sorted by time".into());
                }
                let table = crate::allocation::preset_table(&self.rig()?);
                for c in commands {
                    if let TeleopCommand::Preset { name: Some(name) } = &c.cmd {
                        table.directions(name)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<RigParams, HarnessError> {
        let payload = match &self.payload {
            PayloadSpec::PointMass { mass } => PayloadParams::point_mass(*mass),
            PayloadSpec::RigidBody { mass, inertia } => {
                PayloadParams::rigid_body(*mass, Matrix3::from_diagonal(&Vector3::from(*inertia)))
            }
        };
        let robots = self
            .robots
            .iter()
            .map(|r| {
                QuadrotorParams::crazyflie(
                    r.cable_length,
                    Vector3::from(r.attachment),
                    r.safety_radius,
                )
            })
            .collect();
        Ok(RigParams { payload, robots })
    }

    pub fn allocator_settings(&self) -> AllocatorSettings {
        let a = &self.allocation;
        AllocatorSettings {
            mode: self.mode,
            lambda_s: a.lambda_s,
            qp: a.qp,
            warm_start: a.warm_start,
            hold_periods: a.hold_periods,
        }
    }

    /// The figure-8 described by the trajectory section, if it is one.
    pub fn figure8(&self) -> Option<Figure8> {
        match &self.trajectory {
            TrajectorySpec::Figure8 {
                period,
                scale,
                peak_speed,
                center,
                ramp,
                yaw,
            } => {
                let scale = scale.unwrap_or_else(|| {
                    Figure8::scale_for_peak_speed(*period, peak_speed.unwrap_or(0.0))
                });
                Some(Figure8 {
                    period: *period,
                    scale,
                    center: Vector3::from(*center),
                    ramp: *ramp,
                    yaw: *yaw,
                })
            }
            _ => None,
        }
    }

    pub fn with_mode(&self, mode: AllocationMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }
}
