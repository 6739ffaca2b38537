use approx::assert_relative_eq;
use hoist_core::math::{rot_x, rot_z, skew, E3};
use hoist_core::sim::*;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

const G: f64 = 9.81;

fn point_mass_rig(lengths: &[f64], m0: f64) -> RigParams {
    RigParams {
        payload: PayloadParams::point_mass(m0),
        robots: lengths
            .iter()
            .map(|&l| QuadrotorParams::crazyflie(l, Vector3::zeros(), 0.1))
            .collect(),
    }
}

fn triangle_rig() -> RigParams {
    let side = 0.08;
    let rc = side / 3f64.sqrt();
    let m0 = 0.01;
    let j = m0 * side * side / 24.0;
    RigParams {
        payload: PayloadParams::rigid_body(
            m0,
            Matrix3::from_diagonal(&Vector3::new(j, j, 2.0 * j)),
        ),
        robots: (0..3)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                QuadrotorParams::crazyflie(0.5, Vector3::new(rc * a.cos(), rc * a.sin(), 0.0), 0.1)
            })
            .collect(),
    }
}

fn config(dt: f64) -> SimConfig {
    SimConfig {
        dt,
        gravity: G,
        ..SimConfig::default()
    }
}

fn level(thrust: f64) -> Actuation {
    Actuation {
        thrust,
        torque: Vector3::zeros(),
    }
}

#[test]
fn quad_position_examples() {
    let rig = point_mass_rig(&[0.5], 0.01);
    let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 1);
    s.robots[0].q = E3;
    assert_relative_eq!(quad_position(&s, &rig, 0), Vector3::new(0.0, 0.0, 0.5));

    let mut rig = triangle_rig();
    rig.robots.truncate(1);
    rig.robots[0].attachment = Vector3::new(0.1, 0.0, 0.0);
    assert_relative_eq!(
        quad_position(&s, &rig, 0),
        Vector3::new(0.1, 0.0, 0.5),
        epsilon = 1e-15
    );
    s.r0 = rot_z(std::f64::consts::FRAC_PI_2);
    assert_relative_eq!(
        quad_position(&s, &rig, 0),
        Vector3::new(0.0, 0.1, 0.5),
        epsilon = 1e-15
    );
}

#[test]
fn quad_velocity_examples() {
    let rig = point_mass_rig(&[0.5], 0.01);
    let mut s = FullSystemState::at_rest(Vector3::zeros(), 1);
    s.robots[0].q = E3;
    assert_eq!(quad_velocity(&s, &rig, 0), Vector3::zeros());
    s.v0 = Vector3::new(1.0, 0.0, 0.0);
    assert_relative_eq!(quad_velocity(&s, &rig, 0), Vector3::new(1.0, 0.0, 0.0));
    s.v0 = Vector3::zeros();
    s.robots[0].w = Vector3::new(0.0, 1.0, 0.0);
    assert_relative_eq!(quad_velocity(&s, &rig, 0), Vector3::new(-0.5, 0.0, 0.0));
}

#[test]
fn single_robot_hover_is_an_equilibrium() {
    // Literal configuration (robot below the payload, rod in compression) and
    // the physical hanging one.
    let rig = point_mass_rig(&[0.5], 0.01);
    let f = (rig.robots[0].mass + 0.01) * G;
    for q in [E3, -E3] {
        let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 1);
        s.robots[0].q = q;
        let next = step(&s, &[level(f)], &rig, &config(1e-3)).unwrap().state;
        let diff = next
            .to_vec()
            .iter()
            .zip(s.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }
}

#[test]
fn symmetric_hover_holds_for_one_second() {
    let rig = triangle_rig();
    let share = rig.payload.mass / 3.0;
    let inputs: Vec<_> = rig
        .robots
        .iter()
        .map(|r| level((r.mass + share) * G))
        .collect();
    let s0 = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 3);
    let mut sim = Simulator::new(rig, config(1e-3), s0.clone());
    for _ in 0..1000 {
        sim.step(&inputs).unwrap();
    }
    let diff = sim
        .state()
        .to_vec()
        .iter()
        .zip(s0.to_vec())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(diff <= 1e-4, "{diff}");
    assert_eq!(sim.saturation_count(), 0);
}

#[test]
fn hover_tension_carries_payload_share() {
    let rig = point_mass_rig(&[0.25, 0.5, 0.75], 0.01);
    let s = FullSystemState::at_rest(Vector3::zeros(), 3);
    let inputs: Vec<_> = rig
        .robots
        .iter()
        .map(|r| level((r.mass + 0.01 / 3.0) * G))
        .collect();
    let acc = accelerations(&s, &rig, G, &inputs).unwrap();
    // Vertical cables in parallel: the split is indeterminate only in
    // principle; with identical thrust margins each carries a third.
    let total: f64 = acc.tension.iter().sum();
    assert_relative_eq!(total, 0.01 * G, epsilon = 1e-12);
    assert!(acc.a0.norm() < 1e-12);
}

#[test]
fn free_fall() {
    for rig in [point_mass_rig(&[0.25, 0.5, 0.75], 0.01), triangle_rig()] {
        let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 2.0), 3);
        s.robots[1].q = Vector3::new(0.3, 0.0, -1.0).normalize();
        let inputs = vec![Actuation::default(); 3];
        let acc = accelerations(&s, &rig, G, &inputs).unwrap();
        assert_relative_eq!(acc.a0, -G * E3, epsilon = 1e-9);
        let next = step(&s, &inputs, &rig, &config(1e-3)).unwrap().state;
        assert_relative_eq!(next.v0, -G * 1e-3 * E3, epsilon = 1e-12);
    }
}

/// Relative-coordinate pendulum for one robot and a point mass under a
/// constant vertical thrust equal to the total weight. The centre of mass is
/// fixed, leaving `θ̈ = −(g (m + m0) / (m l)) sin θ`, integrated with RK4.
fn minimal_pendulum_period(m: f64, m0: f64, l: f64, theta0: f64, periods: usize) -> f64 {
    let k = G * (m + m0) / (m * l);
    let f = |th: f64| -k * th.sin();
    let h = 1e-5;
    let (mut th, mut om, mut t) = (theta0, 0.0, 0.0);
    let mut crossings = Vec::new();
    while crossings.len() <= periods {
        let prev = th;
        let k1 = (om, f(th));
        let k2 = (om + 0.5 * h * k1.1, f(th + 0.5 * h * k1.0));
        let k3 = (om + 0.5 * h * k2.1, f(th + 0.5 * h * k2.0));
        let k4 = (om + h * k3.1, f(th + h * k3.0));
        th += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        om += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += h;
        if prev < 0.0 && th >= 0.0 {
            crossings.push(t - h * th / (th - prev));
        }
    }
    (crossings[periods] - crossings[0]) / periods as f64
}

#[test]
fn pendulum_period_matches_minimal_coordinates() {
    let rig = point_mass_rig(&[0.5], 0.01);
    let m = rig.robots[0].mass;
    let theta0 = 5f64.to_radians();
    let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 1);
    s.robots[0].q = Vector3::new(theta0.sin(), 0.0, -theta0.cos());
    let f = (m + 0.01) * G;
    let mut sim = Simulator::new(rig, config(1e-3), s);
    let mut crossings = Vec::new();
    let mut prev = sim.state().robots[0].q.x;
    while crossings.len() <= 10 {
        sim.step(&[level(f)]).unwrap();
        let x = sim.state().robots[0].q.x;
        if prev < 0.0 && x >= 0.0 {
            crossings.push(sim.time() - 1e-3 * x / (x - prev));
        }
        prev = x;
    }
    let period = (crossings[10] - crossings[0]) / 10.0;
    let oracle = minimal_pendulum_period(m, 0.01, 0.5, theta0, 10);
    assert!(
        (period - oracle).abs() / oracle < 0.02,
        "{period} vs {oracle}"
    );
    let small_angle = 2.0 * std::f64::consts::PI * (m * 0.5 / (G * (m + 0.01))).sqrt();
    assert!((oracle - small_angle).abs() / small_angle < 0.01);
}

/// Energy including the potential of the constant vertical thrust.
fn swing_energy(s: &FullSystemState, rig: &RigParams, thrust: f64) -> f64 {
    mechanical_energy(s, rig, G) - thrust * quad_position(s, rig, 0).z
}

fn energy_drift_per_second(dt: f64) -> f64 {
    let rig = point_mass_rig(&[0.5], 0.01);
    let theta0 = 5f64.to_radians();
    let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 1);
    s.robots[0].q = Vector3::new(theta0.sin(), 0.0, -theta0.cos());
    let f = (rig.robots[0].mass + 0.01) * G;
    let swing = 0.01 * G * 0.5 * (1.0 - theta0.cos());
    let e0 = swing_energy(&s, &rig, f);
    let mut sim = Simulator::new(rig.clone(), config(dt), s);
    let steps = (1.0 / dt).round() as usize;
    for _ in 0..steps {
        sim.step(&[level(f)]).unwrap();
    }
    (swing_energy(sim.state(), &rig, f) - e0) / swing
}

#[test]
fn energy_drift_is_a_discretization_artifact() {
    // Drift relative to the swing energy. Explicit Euler drifts by O(dt), so
    // the Richardson extrapolation 2·d(dt/2) − d(dt) estimates the drift of
    // the continuous equations of motion, which must vanish.
    let d1 = energy_drift_per_second(1e-4);
    let d2 = energy_drift_per_second(5e-5);
    let extrapolated = 2.0 * d2 - d1;
    assert!(extrapolated.abs() <= 1e-3, "{d1} {d2} {extrapolated}");
    assert!((d1 / d2 - 2.0).abs() < 0.1, "{d1} {d2}");
}

fn swing_state_after(dt: f64, duration: f64) -> FullSystemState {
    let rig = triangle_rig();
    let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 3);
    s.robots[0].q = Vector3::new(0.2, 0.05, -1.0).normalize();
    s.robots[1].w = Vector3::new(0.3, -0.2, 0.0);
    s.w0 = Vector3::new(0.0, 0.0, 0.5);
    let share = rig.payload.mass / 3.0;
    let inputs: Vec<_> = rig
        .robots
        .iter()
        .map(|r| level((r.mass + share) * G))
        .collect();
    let mut sim = Simulator::new(rig, config(dt), s);
    let steps = (duration / dt).round() as usize;
    for _ in 0..steps {
        sim.step(&inputs).unwrap();
    }
    sim.state().clone()
}

fn state_distance(a: &FullSystemState, b: &FullSystemState) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn integrator_is_first_order() {
    let reference = swing_state_after(1e-6, 1.0);
    let e1 = state_distance(&swing_state_after(1e-3, 1.0), &reference);
    let e2 = state_distance(&swing_state_after(5e-4, 1.0), &reference);
    let e3 = state_distance(&swing_state_after(2.5e-4, 1.0), &reference);
    for ratio in [e1 / e2, e2 / e3] {
        assert!((1.7..2.3).contains(&ratio), "{e1} {e2} {e3}");
    }
}

#[test]
fn reported_velocities_match_finite_differences() {
    let rig = triangle_rig();
    let dt = 1e-4;
    let mut s = FullSystemState::at_rest(Vector3::new(0.0, 0.0, 1.0), 3);
    s.v0 = Vector3::new(0.2, -0.1, 0.05);
    s.w0 = Vector3::new(0.1, 0.2, 0.3);
    s.robots[2].q = Vector3::new(-0.2, 0.1, -1.0).normalize();
    s.robots[2].w = s.robots[2].q.cross(&Vector3::new(0.5, 0.4, 0.0));
    let inputs: Vec<_> = rig
        .robots
        .iter()
        .map(|r| level(r.mass * G + 0.03))
        .collect();
    let mut sim = Simulator::new(rig.clone(), config(dt), s);
    for _ in 0..50 {
        let before = sim.state().clone();
        sim.step(&inputs).unwrap();
        for i in 0..3 {
            let fd = (quad_position(sim.state(), &rig, i) - quad_position(&before, &rig, i)) / dt;
            let v = quad_velocity(&before, &rig, i);
            assert!((fd - v).norm() < 50.0 * dt * (1.0 + v.norm()), "{fd} {v}");
        }
    }
}

/// Zero gravity and zero thrust: linear and angular momentum of the whole
/// system are conserved by the continuous dynamics.
#[test]
fn momentum_is_conserved_without_external_forces() {
    let rig = triangle_rig();
    let momenta = |s: &FullSystemState| {
        let mut lin = rig.payload.mass * s.v0;
        let mut ang = s.r0 * rig.payload.inertia * s.w0 + rig.payload.mass * s.p0.cross(&s.v0);
        for i in 0..3 {
            let (p, v) = (quad_position(s, &rig, i), quad_velocity(s, &rig, i));
            let m = rig.robots[i].mass;
            lin += m * v;
            ang += m * p.cross(&v)
                + s.robots[i].r * rig.robots[i].inertia_diag.component_mul(&s.robots[i].omega);
        }
        (lin, ang)
    };
    let mut s = FullSystemState::at_rest(Vector3::zeros(), 3);
    s.w0 = Vector3::new(0.4, -0.3, 1.0);
    s.v0 = Vector3::new(0.1, 0.0, 0.0);
    s.robots[0].w = Vector3::new(0.5, 0.2, 0.0);
    s.robots[1].q = Vector3::new(0.3, 0.2, -1.0).normalize();
    s.robots[2].omega = Vector3::new(1.0, 0.0, 2.0);
    let cfg = SimConfig {
        dt: 1e-5,
        gravity: 0.0,
        ..SimConfig::default()
    };
    let (l0, h0) = momenta(&s);
    let mut sim = Simulator::new(rig.clone(), cfg, s);
    for _ in 0..20_000 {
        sim.step(&[Actuation::default(); 3]).unwrap();
    }
    let (l1, h1) = momenta(sim.state());
    assert!((l1 - l0).norm() < 1e-6 * (1.0 + l0.norm()), "{l0} {l1}");
    assert!((h1 - h0).norm() < 1e-3 * h0.norm(), "{h0} {h1}");
}

#[test]
fn motor_saturation_is_counted() {
    let rig = point_mass_rig(&[0.5], 0.01);
    let mut sim = Simulator::new(
        rig.clone(),
        config(1e-3),
        FullSystemState::at_rest(Vector3::zeros(), 1),
    );
    sim.step(&[level(10.0 * rig.robots[0].max_thrust())])
        .unwrap();
    assert_eq!(sim.saturation_count(), 1);
    let acc = sim.state().v0.z / 1e-3;
    assert!(acc < 10.0 * rig.robots[0].max_thrust() / rig.total_mass());
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut rig = point_mass_rig(&[0.5], 0.01);
    assert!(rig.validate().is_ok());
    rig.robots[0].safety_radius = 1.0;
    assert!(rig.validate().is_err());
    let mut rig = triangle_rig();
    rig.payload.inertia[(0, 0)] = -1.0;
    assert!(rig.validate().is_err());
    assert!(SimConfig {
        dt: 5e-3,
        ..SimConfig::default()
    }
    .validate()
    .is_err());
}

#[test]
fn mechanical_energy_examples() {
    let rig = point_mass_rig(&[0.5, 0.5], 0.01);
    let mut s = FullSystemState::at_rest(Vector3::zeros(), 2);
    let potential_only = mechanical_energy(&s, &rig, G);
    assert_relative_eq!(potential_only, 2.0 * 0.034 * G * 0.5, epsilon = 1e-12);
    s.v0 = Vector3::new(0.3, 0.1, 0.0);
    s.robots[1].w = Vector3::new(0.2, 0.0, 0.0);
    let k1 = mechanical_energy(&s, &rig, G) - potential_only;
    s.v0 *= 2.0;
    s.robots[1].w *= 2.0;
    let k2 = mechanical_energy(&s, &rig, G) - potential_only;
    assert_relative_eq!(k2, 4.0 * k1, epsilon = 1e-12);
}

fn arb_unit() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..-0.2)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steps_stay_on_the_manifold(
        qs in proptest::collection::vec(arb_unit(), 3),
        ws in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 3),
        w0 in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        yaw in -3.0f64..3.0,
        thrusts in proptest::collection::vec(0.0f64..0.6, 3),
    ) {
        let rig = triangle_rig();
        let mut s = FullSystemState::at_rest(Vector3::zeros(), 3);
        s.r0 = rot_z(yaw) * rot_x(0.2);
        s.w0 = Vector3::new(w0.0, w0.1, w0.2);
        for i in 0..3 {
            let q = qs[i];
            let w = Vector3::new(ws[i].0, ws[i].1, ws[i].2);
            s.robots[i].q = q;
            s.robots[i].w = w - q * q.dot(&w);
            s.robots[i].r = rot_x(0.1 * i as f64);
            s.robots[i].omega = skew(&q) * w;
        }
        let inputs: Vec<_> = thrusts.iter().map(|&f| Actuation { thrust: f, torque: Vector3::new(1e-4, -1e-4, 0.0) }).collect();
        let mut state = s;
        for _ in 0..20 {
            state = step(&state, &inputs, &rig, &config(1e-3)).unwrap().state;
            prop_assert!(state.manifold_error() <= 1e-9);
        }
    }
}
