use nalgebra::Vector3;

use super::operator::Operator;
use super::protocol::{
    CommandAck, HalfspaceFrame, Hello, StateFrame, TeleopCommand, PROTOCOL_VERSION,
};
use crate::allocation::preset_table;
use crate::harness::{
    scenario_preference, AbortReason, HarnessError, Runner, Scenario, TrajectorySpec,
};
use crate::sim::quad_position;

/// A command as it arrived from the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: Option<u64>,
    pub cmd: TeleopCommand,
    /// Session tick current when the command was read.
    pub received_tick: u64,
}

/// Live simulation driven by operator commands. Owns all simulation state;
/// the network side only talks to it through [`Envelope`]s and frames.
#[derive(Debug, Clone)]
pub struct Session {
    scenario: Scenario,
    runner: Runner,
    operator: Operator,
    last_command: Option<CommandAck>,
    aborted: Option<AbortReason>,
}

fn home(scenario: &Scenario) -> Vector3<f64> {
    match &scenario.trajectory {
        TrajectorySpec::TeleopLog { start, .. } => Vector3::from(*start),
        TrajectorySpec::Hover { position, .. } => Vector3::from(*position),
        TrajectorySpec::Figure8 { .. } => {
            scenario
                .figure8()
                .expect("figure-8 scenario")
                .sample(0.0, 0)
                .p0r
        }
    }
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Session {
    /// Starts at the scenario's initial position; only the rig, controller
    /// and allocation settings are used, the trajectory gives the start.
    pub fn new(scenario: &Scenario) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let rig = scenario.rig()?;
        let operator = Operator::new(
            home(scenario),
            scenario.teleop.limits,
            preset_table(&rig),
            scenario.allocation.preset_lambda,
            scenario.allocation.lambda,
        );
        let mut probe = scenario.clone();
        probe.trajectory = TrajectorySpec::Hover {
            position: arr(&home(scenario)),
            yaw: 0.0,
        };
        let runner = Runner::from_scenario(&probe, &scenario_preference(&probe)?)?;
        Ok(Self {
            scenario: scenario.clone(),
            runner,
            operator,
            last_command: None,
            aborted: None,
        })
    }

    pub fn hello(&self) -> Hello {
        let rig = self.runner.rig();
        Hello {
            v: PROTOCOL_VERSION,
            n: rig.n(),
            presets: self.operator.presets().names(),
            rate_hz: self.scenario.teleop.rate_hz,
            dt: self.runner.dt(),
            max_speed: self.operator.limits().max_speed,
            safety_radii: rig.robots.iter().map(|r| r.safety_radius).collect(),
            cable_lengths: rig.robots.iter().map(|r| r.cable_length).collect(),
            obstacles: self.scenario.obstacles.clone(),
        }
    }

    pub fn tick(&self) -> u64 {
        self.runner.tick()
    }

    pub fn time(&self) -> f64 {
        self.runner.time()
    }

    pub fn dt(&self) -> f64 {
        self.runner.dt()
    }

    pub fn paused(&self) -> bool {
        self.operator.paused()
    }

    pub fn aborted(&self) -> Option<&AbortReason> {
        self.aborted.as_ref()
    }

    pub fn runner(&self) -> &Runner {
        &self.runner
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    /// Applies a command before the next tick. A reset after an abort
    /// restarts the simulation.
    pub fn apply(&mut self, env: Envelope) -> Result<(), String> {
        if env.cmd == TeleopCommand::Reset && self.aborted.is_some() {
            *self = Self::new(&self.scenario).map_err(|e| e.to_string())?;
        }
        self.operator.apply(&env.cmd).map_err(|e| e.to_string())?;
        self.last_command = Some(CommandAck {
            seq: env.seq,
            received_tick: env.received_tick,
            applied_tick: self.runner.tick(),
        });
        Ok(())
    }

    /// Operator lost: stop in place, keep the formation.
    pub fn disconnect(&mut self) {
        self.operator.hold();
    }

    /// Advances one control tick unless paused or aborted. Returns the
    /// abort reason the first time the run fails.
    pub fn step(&mut self) -> Result<bool, AbortReason> {
        if self.paused() || self.aborted.is_some() {
            return Ok(false);
        }
        self.operator.advance(self.runner.dt());
        let reference = self.operator.setpoint(self.runner.rig().n());
        match self.runner.step(&reference, &self.operator.preference()) {
            Ok(_) => Ok(true),
            Err(reason) => {
                self.aborted = Some(reason.clone());
                Err(reason)
            }
        }
    }

    pub fn frame(&self) -> StateFrame {
        let state = self.runner.state();
        let rig = self.runner.rig();
        let n = rig.n();
        let diag = self.runner.diagnostics();
        let halfspaces = diag
            .halfspaces()
            .into_iter()
            .enumerate()
            .map(|(k, (robot, h))| HalfspaceFrame {
                robot,
                normal: arr(&h.normal),
                offset: h.offset,
                active: diag.active.contains(&k),
            })
            .collect();
        let r = state.r0;
        let reference = self.operator.setpoint(n);
        StateFrame {
            v: PROTOCOL_VERSION,
            tick: self.runner.tick(),
            t: self.runner.time(),
            paused: self.paused(),
            payload_position: arr(&state.p0),
            payload_rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            reference_position: arr(&reference.p0r),
            reference_velocity: arr(&reference.dp0r),
            robots: (0..n).map(|i| arr(&quad_position(state, rig, i))).collect(),
            cables: state.robots.iter().map(|s| arr(&s.q)).collect(),
            mu: self.runner.forces().mu.iter().map(arr).collect(),
            halfspaces,
            min_distance: crate::sim::min_pairwise_distance(state, rig).map_or(0.0, |m| m.0),
            preset: self.operator.preset().map(str::to_string),
            velocity_command: arr(&self.operator.velocity_command()),
            last_command: self.last_command.clone(),
            obstacles: self.scenario.obstacles.clone(),
        }
    }
}
