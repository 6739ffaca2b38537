use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{Accumulator, RunMetrics, TimingStat, TimingStats};
use super::scenario::{Scenario, TimedCommand, TrajectorySpec};
use super::trajectory::Figure8;
use super::HarnessError;
use crate::allocation::{
    preset_table, AllocationDiagnostics, AllocationMode, Allocator, CableForceSet, DesiredWrench,
    FormationPreference,
};
use crate::controller::{
    control_step, desired_directions, hover_state, payload_wrench, ControllerSettings,
    ReferenceSetpoint,
};
use crate::math::{euler_zyx, rot_z, wrap_angle};
use crate::sim::{
    min_pairwise_distance, quad_position, FullSystemState, RigParams, SimConfig, SimError,
    Simulator,
};
use crate::teleop::Operator;

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum AbortReason {
    NonFiniteState {
        time: f64,
    },
    /// Allocation kept failing beyond the hold budget.
    Infeasible {
        time: f64,
        error: String,
    },
    Contact {
        time: f64,
        i: usize,
        j: usize,
        distance: f64,
        floor: f64,
    },
    Controller {
        time: f64,
        error: String,
    },
}

/// Reproducible per-tick record; timings are deliberately left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub p0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub p0r: Vector3<f64>,
    /// Payload roll, pitch, yaw.
    pub rpy0: Vector3<f64>,
    pub rpy0r: Vector3<f64>,
    /// Roll, pitch, yaw of `R0rᵀ R0`.
    pub attitude_error: Vector3<f64>,
    pub robots: Vec<Vector3<f64>>,
    pub mu: Vec<Vector3<f64>>,
    pub min_distance: f64,
    pub clearance_ratio: f64,
    pub held: bool,
    pub qp_iterations: usize,
    pub saturated: u64,
    pub preset: Option<String>,
}

/// Closed-loop rig: simulator, controller and allocator advanced one control
/// tick at a time. Scenario runs and teleop sessions both drive it.
#[derive(Debug, Clone)]
pub struct Runner {
    sim: Simulator,
    settings: ControllerSettings,
    allocator: Allocator,
    replicas: Vec<Allocator>,
    every: usize,
    forces: CableForceSet,
    diagnostics: AllocationDiagnostics,
    directions: Vec<Vector3<f64>>,
    wrench: DesiredWrench,
    abort_on_contact: bool,
    tick: u64,
    replica_mismatches: u64,
    allocations: u64,
    infeasible: u64,
    last_allocated: bool,
}

const SETTLE_ITERATIONS: usize = 200;
const SETTLE_TOL: f64 = 1e-12;
/// Cable tilt of the first guess; vertical cables give no separating plane.
/// Robot `k` starts at azimuth `90° + k·360°/n`, the layout of the triangle
/// preset, whose ordering also matches the line preset's slots.
const SETTLE_FAN: f64 = 0.2;

/// Equilibrium in which the allocated forces hold the payload at `p0` with
/// attitude `r0`: allocate, place cables along the forces, repeat until the
/// forces stop changing.
pub fn settle(
    rig: &RigParams,
    allocator: &mut Allocator,
    p0: Vector3<f64>,
    r0: Matrix3<f64>,
    preference: &FormationPreference,
    gravity: f64,
) -> Result<(FullSystemState, CableForceSet), HarnessError> {
    let n = rig.n();
    let mut state = FullSystemState::at_rest(p0, n);
    state.r0 = r0;
    for (k, r) in state.robots.iter_mut().enumerate() {
        let phi = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (s, c) = SETTLE_FAN.sin_cos();
        r.q = -Vector3::new(s * phi.cos(), s * phi.sin(), c);
    }
    let reference = ReferenceSetpoint {
        r0r: r0,
        ..ReferenceSetpoint::hover(p0, n)
    };
    let wrench = payload_wrench(
        &state,
        &reference,
        &rig.payload,
        &ControllerSettings::default().gains,
        gravity,
    );
    let mut forces: Option<CableForceSet> = None;
    for _ in 0..SETTLE_ITERATIONS {
        allocator.reset();
        let next = allocator.allocate(&state, &wrench, preference)?.forces;
        state = hover_state(rig, p0, r0, &next, &reference.yaw, gravity)?;
        let done = forces.as_ref().is_some_and(|f| {
            f.mu.iter()
                .zip(&next.mu)
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max)
                <= SETTLE_TOL
        });
        forces = Some(next);
        if done {
            break;
        }
    }
    let forces = forces.expect("at least one settle iteration");
    allocator.reset();
    allocator.set_last(forces.clone());
    Ok((state, forces))
}

impl Runner {
    /// Settles the rig at `p0`, `r0` and prepares to track from there.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rig: RigParams,
        config: SimConfig,
        settings: ControllerSettings,
        mut allocator: Allocator,
        replicas: usize,
        every: usize,
        p0: Vector3<f64>,
        r0: Matrix3<f64>,
        preference: &FormationPreference,
    ) -> Result<Self, HarnessError> {
        let (state, forces) = settle(&rig, &mut allocator, p0, r0, preference, config.gravity)?;
        let directions = desired_directions(&forces)?;
        let replicas = vec![allocator.clone(); replicas];
        Ok(Self {
            sim: Simulator::new(rig, config, state),
            settings,
            allocator,
            replicas,
            every: every.max(1),
            wrench: DesiredWrench::force(forces.sum()),
            forces,
            diagnostics: AllocationDiagnostics::default(),
            directions,
            abort_on_contact: true,
            tick: 0,
            replica_mismatches: 0,
            allocations: 0,
            infeasible: 0,
            last_allocated: false,
        })
    }

    pub fn from_scenario(
        scenario: &Scenario,
        preference: &FormationPreference,
    ) -> Result<Self, HarnessError> {
        let rig = scenario.rig()?;
        let allocator = Allocator::new(&rig, scenario.allocator_settings())?;
        let reference = initial_reference(scenario, rig.n());
        let mut runner = Self::new(
            rig,
            scenario.sim,
            scenario.controller,
            allocator,
            scenario.replicas,
            scenario.allocation.every,
            reference.p0r,
            reference.r0r,
            preference,
        )?;
        runner.abort_on_contact = scenario.metrics.abort_on_contact;
        let offset =
            Vector3::from(scenario.start.offset) + jitter(scenario.sim.seed, scenario.start.jitter);
        if offset != Vector3::zeros() {
            let mut state = runner.sim.state().clone();
            state.p0 += offset;
            runner.sim.reset(state);
        }
        Ok(runner)
    }

    pub fn set_abort_on_contact(&mut self, on: bool) {
        self.abort_on_contact = on;
    }

    pub fn state(&self) -> &FullSystemState {
        self.sim.state()
    }

    pub fn rig(&self) -> &RigParams {
        &self.sim.rig
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    pub fn dt(&self) -> f64 {
        self.sim.config.dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn forces(&self) -> &CableForceSet {
        &self.forces
    }

    pub fn wrench(&self) -> &DesiredWrench {
        &self.wrench
    }

    /// Diagnostics of the most recent allocation.
    pub fn diagnostics(&self) -> &AllocationDiagnostics {
        &self.diagnostics
    }

    /// Whether the last tick ran the allocator.
    pub fn allocated(&self) -> bool {
        self.last_allocated
    }

    pub fn replica_mismatches(&self) -> u64 {
        self.replica_mismatches
    }

    pub fn allocations(&self) -> u64 {
        self.allocations
    }

    pub fn infeasible_count(&self) -> u64 {
        self.infeasible
    }

    pub fn saturation_count(&self) -> u64 {
        self.sim.saturation_count()
    }

    /// Runs one control tick against `reference` and advances the simulator.
    /// The record describes the state at the start of the tick.
    pub fn step(
        &mut self,
        reference: &ReferenceSetpoint,
        preference: &FormationPreference,
    ) -> Result<TickRecord, AbortReason> {
        let t = self.sim.time();
        let state = self.sim.state().clone();
        let rig = &self.sim.rig;
        let gravity = self.sim.config.gravity;
        let (min_distance, clearance, contact) = clearance(&state, rig);
        if self.abort_on_contact {
            if let Some((i, j, distance, floor)) = contact {
                return Err(AbortReason::Contact {
                    time: t,
                    i,
                    j,
                    distance,
                    floor,
                });
            }
        }

        self.wrench = payload_wrench(
            &state,
            reference,
            &rig.payload,
            &self.settings.gains,
            gravity,
        );
        self.last_allocated = self.tick.is_multiple_of(self.every as u64);
        if self.last_allocated {
            let out = self
                .allocator
                .allocate(&state, &self.wrench, preference)
                .map_err(|e| AbortReason::Infeasible {
                    time: t,
                    error: e.to_string(),
                })?;
            for replica in &mut self.replicas {
                let same = match replica.allocate(&state, &self.wrench, preference) {
                    Ok(r) => bitwise_equal(&r.forces, &out.forces),
                    Err(_) => false,
                };
                if !same {
                    self.replica_mismatches += 1;
                }
            }
            self.allocations += 1;
            if out.diagnostics.held {
                self.infeasible += 1;
            }
            self.forces = out.forces;
            self.diagnostics = out.diagnostics;
        }

        let outputs = control_step(
            &state,
            reference,
            rig,
            gravity,
            &self.settings,
            &self.wrench,
            &self.forces,
            &mut self.directions,
        )
        .map_err(|e| AbortReason::Controller {
            time: t,
            error: e.to_string(),
        })?;
        let inputs: Vec<_> = outputs.iter().map(|o| o.actuation()).collect();
        let robots = (0..rig.n())
            .map(|i| quad_position(&state, rig, i))
            .collect();
        let saturated_before = self.sim.saturation_count();
        self.sim.step(&inputs).map_err(|e| match e {
            SimError::NonFiniteState { time } => AbortReason::NonFiniteState { time },
            other => AbortReason::Controller {
                time: t,
                error: other.to_string(),
            },
        })?;

        let record = TickRecord {
            tick: self.tick,
            t,
            p0: state.p0,
            v0: state.v0,
            p0r: reference.p0r,
            rpy0: euler_zyx(&state.r0),
            rpy0r: euler_zyx(&reference.r0r),
            attitude_error: euler_zyx(&(reference.r0r.transpose() * state.r0)),
            robots,
            mu: self.forces.mu.clone(),
            min_distance,
            clearance_ratio: clearance,
            held: self.last_allocated && self.diagnostics.held,
            qp_iterations: if self.last_allocated {
                self.diagnostics.total_iterations()
            } else {
                0
            },
            saturated: self.sim.saturation_count() - saturated_before,
            preset: preference.preset_name().map(str::to_string),
        };
        self.tick += 1;
        Ok(record)
    }
}

/// Minimum distance, minimum clearance ratio and the first pair below the
/// hard floor of half the combined radii.
#[allow(clippy::type_complexity)]
fn clearance(
    state: &FullSystemState,
    rig: &RigParams,
) -> (f64, f64, Option<(usize, usize, f64, f64)>) {
    let n = rig.n();
    let pos: Vec<_> = (0..n).map(|i| quad_position(state, rig, i)).collect();
    let mut ratio = f64::INFINITY;
    let mut contact = None;
    for i in 0..n {
        for j in i + 1..n {
            let d = (pos[i] - pos[j]).norm();
            let sum = rig.robots[i].safety_radius + rig.robots[j].safety_radius;
            ratio = ratio.min(d / sum);
            if contact.is_none() && d < 0.5 * sum {
                contact = Some((i, j, d, 0.5 * sum));
            }
        }
    }
    let min = min_pairwise_distance(state, rig).map_or(f64::INFINITY, |m| m.0);
    (min, ratio, contact)
}

fn bitwise_equal(a: &CableForceSet, b: &CableForceSet) -> bool {
    a.mu.len() == b.mu.len()
        && a.mu.iter().zip(&b.mu).all(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

fn jitter(seed: u64, radius: f64) -> Vector3<f64> {
    if radius <= 0.0 {
        return Vector3::zeros();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

fn initial_reference(scenario: &Scenario, n: usize) -> ReferenceSetpoint {
    match &scenario.trajectory {
        TrajectorySpec::Hover { position, yaw } => ReferenceSetpoint {
            r0r: rot_z(*yaw),
            ..ReferenceSetpoint::hover(Vector3::from(*position), n)
        },
        TrajectorySpec::TeleopLog { start, .. } => {
            ReferenceSetpoint::hover(Vector3::from(*start), n)
        }
        TrajectorySpec::Figure8 { .. } => scenario
            .figure8()
            .expect("figure-8 scenario")
            .sample(0.0, n),
    }
}

/// Reference source for a scenario run.
enum Source<'a> {
    Fixed(ReferenceSetpoint),
    Figure8(Figure8),
    Log {
        operator: Operator,
        commands: &'a [TimedCommand],
        next: usize,
    },
}

impl Source<'_> {
    fn sample(&mut self, t: f64, dt: f64, n: usize) -> ReferenceSetpoint {
        match self {
            Source::Fixed(r) => r.clone(),
            Source::Figure8(f) => f.sample(t, n),
            Source::Log {
                operator,
                commands,
                next,
            } => {
                // Half a tick of slack so commands stamped on a tick boundary
                // land on that tick despite rounding.
                while *next < commands.len() && commands[*next].t <= t + 0.5 * dt {
                    if let Err(e) = operator.apply(&commands[*next].cmd) {
                        log::warn!("ignoring logged command at t={}: {e}", commands[*next].t);
                    }
                    *next += 1;
                }
                operator.advance(dt);
                operator.setpoint(n)
            }
        }
    }

    fn preference(&self, fallback: &FormationPreference) -> FormationPreference {
        match self {
            Source::Log { operator, .. } => operator.preference(),
            _ => fallback.clone(),
        }
    }
}

/// Everything a run produced. Metrics are partial when `aborted` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub mode: AllocationMode,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub aborted: Option<AbortReason>,
    #[serde(skip)]
    pub timing: TimingStats,
    #[serde(skip)]
    pub ticks: Vec<TickRecord>,
}

/// Static preference for a scenario: its preset if one is set, otherwise
/// continuity with the previous allocation.
pub fn scenario_preference(scenario: &Scenario) -> Result<FormationPreference, HarnessError> {
    let a = &scenario.allocation;
    Ok(match &a.preset {
        Some(name) => preset_table(&scenario.rig()?).preference(name, a.preset_lambda)?,
        None => FormationPreference::previous(a.lambda),
    })
}

/// Runs a scenario to completion or abort.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, HarnessError> {
    scenario.validate()?;
    let wall = Instant::now();
    let rig = scenario.rig()?;
    let n = rig.n();
    let fallback = scenario_preference(scenario)?;
    let mut source = match &scenario.trajectory {
        TrajectorySpec::Figure8 { .. } => {
            Source::Figure8(scenario.figure8().expect("figure-8 scenario"))
        }
        TrajectorySpec::Hover { .. } => Source::Fixed(initial_reference(scenario, n)),
        TrajectorySpec::TeleopLog { start, commands } => Source::Log {
            operator: Operator::new(
                Vector3::from(*start),
                scenario.teleop.limits,
                preset_table(&rig),
                scenario.allocation.preset_lambda,
                scenario.allocation.lambda,
            ),
            commands,
            next: 0,
        },
    };
    let mut runner = Runner::from_scenario(scenario, &source.preference(&fallback))?;
    let dt = runner.dt();
    let steps = (scenario.duration / dt).round() as u64;

    let mut pos = [Accumulator::default(); 3];
    let mut rot = [Accumulator::default(); 3];
    let mut iters = Accumulator::default();
    let mut timing = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut min = (f64::INFINITY, (0, 0), 0.0);
    let mut min_ratio = f64::INFINITY;
    let mut contact_ticks = 0;
    let mut ticks = Vec::new();
    let mut aborted = None;

    for k in 0..steps {
        let t = k as f64 * dt;
        let reference = source.sample(t, dt, n);
        let preference = source.preference(&fallback);
        let rec = match runner.step(&reference, &preference) {
            Ok(r) => r,
            Err(reason) => {
                aborted = Some(reason);
                break;
            }
        };
        if runner.allocated() {
            let d = runner.diagnostics();
            iters.push(d.total_iterations() as f64);
            let fd: f64 = d
                .pairs
                .iter()
                .filter_map(|p| p.fd.map(|s| s.runtime_us))
                .sum();
            let svm: f64 = d.pairs.iter().map(|p| p.svm.runtime_us).sum();
            let mu = d.mu.map_or(0.0, |m| m.runtime_us);
            for (v, x) in timing.iter_mut().zip([d.runtime_us, fd, svm, mu]) {
                v.push(x * 1e-3 + 0.0);
            }
        }
        if rec.t >= scenario.metrics.start - 0.5 * dt {
            let e = rec.p0 - rec.p0r;
            for a in 0..3 {
                pos[a].push(e[a].abs() * 100.0);
            }
            if rig.payload.is_rigid() {
                for a in 0..3 {
                    rot[a].push(wrap_angle(rec.attitude_error[a]).abs().to_degrees());
                }
            }
        }
        if rec.min_distance < min.0 {
            let pair = closest_pair(&rec);
            min = (rec.min_distance, pair, rec.t);
        }
        min_ratio = min_ratio.min(rec.clearance_ratio);
        if rec.clearance_ratio < 1.0 {
            contact_ticks += 1;
        }
        if k % scenario.log_every as u64 == 0 {
            ticks.push(rec);
        }
    }

    let metrics = RunMetrics {
        ticks: runner.tick(),
        simulated_time: runner.time(),
        window_start: scenario.metrics.start,
        position_error_cm: pos.map(|a| a.stat()),
        orientation_error_deg: rig.payload.is_rigid().then(|| rot.map(|a| a.stat())),
        min_distance: min.0,
        min_distance_pair: min.1,
        min_distance_time: min.2,
        min_clearance_ratio: min_ratio,
        ticks_in_contact: contact_ticks,
        saturation_count: runner.saturation_count(),
        infeasibility_count: runner.infeasible_count(),
        allocations: runner.allocations(),
        qp_iterations: iters.stat(),
        replica_mismatches: runner.replica_mismatches(),
    };
    let [total, fd, svm, mu] = timing;
    let timing = TimingStats {
        total_ms: TimingStat::from_samples(&total),
        fd_ms: TimingStat::from_samples(&fd),
        svm_ms: TimingStat::from_samples(&svm),
        mu_ms: TimingStat::from_samples(&mu),
        wall_s: wall.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome {
        scenario: scenario.name.clone(),
        mode: scenario.mode,
        seed: scenario.sim.seed,
        metrics,
        aborted,
        timing,
        ticks,
    })
}

fn closest_pair(rec: &TickRecord) -> (usize, usize) {
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..rec.robots.len() {
        for j in i + 1..rec.robots.len() {
            let d = (rec.robots[i] - rec.robots[j]).norm();
            if d < best.0 {
                best = (d, (i, j));
            }
        }
    }
    best.1
}
