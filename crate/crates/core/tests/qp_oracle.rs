mod support;

use hoist_core::qp::{solve, ProblemFamily, QpProblem, QpSettings, QpStatus};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{enumerate_active_sets, interior_point, random, OracleQp};

fn to_problem(o: &OracleQp) -> QpProblem {
    QpProblem::new(
        o.p.clone(),
        o.q.clone(),
        o.a.clone(),
        o.l.clone(),
        o.u.clone(),
    )
    .unwrap()
}

/// Largest violation of `y⁺ ⊥ (u − Ax)` and `y⁻ ⊥ (Ax − l)`.
fn complementarity(o: &OracleQp, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ax = &o.a * x;
    let mut worst = 0.0f64;
    for i in 0..y.len() {
        let up = if o.u[i].is_finite() {
            (o.u[i] - ax[i]).abs()
        } else {
            1.0
        };
        let lo = if o.l[i].is_finite() {
            (ax[i] - o.l[i]).abs()
        } else {
            1.0
        };
        worst = worst.max(y[i].max(0.0) * up).max((-y[i]).max(0.0) * lo);
    }
    worst
}

#[test]
fn random_instances_match_interior_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let settings = QpSettings::default();
    for k in 0..60 {
        let o = random::instance(&mut rng);
        let sol = solve(&to_problem(&o), None, &settings);
        assert_eq!(sol.status, QpStatus::Solved, "instance {k}");
        let x_ref = interior_point(&o).expect("oracle converges");
        let (f, f_ref) = (o.objective(&sol.x), o.objective(&x_ref));
        assert!(
            (f - f_ref).abs() <= 1e-5 * (1.0 + f_ref.abs()),
            "instance {k}: {f} vs {f_ref}"
        );
        assert!(
            sol.primal_residual <= 1e-6 && sol.dual_residual <= 1e-6,
            "instance {k}"
        );
        assert!(complementarity(&o, &sol.x, &sol.y) <= 1e-6, "instance {k}");
    }
}

#[test]
fn small_instances_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 30 {
        let o = random::instance(&mut rng);
        let inequality_rows: usize = (0..o.l.len())
            .map(|i| {
                if o.l[i] == o.u[i] {
                    0
                } else {
                    o.l[i].is_finite() as usize + o.u[i].is_finite() as usize
                }
            })
            .sum();
        if inequality_rows > 12 {
            continue;
        }
        checked += 1;
        let sol = solve(&to_problem(&o), None, &QpSettings::default());
        let x_ref = enumerate_active_sets(&o).expect("feasible by construction");
        let f_ref = o.objective(&x_ref);
        assert!((o.objective(&sol.x) - f_ref).abs() <= 1e-6 * (1.0 + f_ref.abs()));
    }
}

#[test]
fn contradictory_equalities_are_infeasible() {
    let o = OracleQp {
        p: DMatrix::identity(1, 1),
        q: DVector::zeros(1),
        a: DMatrix::from_element(2, 1, 1.0),
        l: DVector::from_row_slice(&[1.0, 2.0]),
        u: DVector::from_row_slice(&[1.0, 2.0]),
    };
    let sol = solve(&to_problem(&o), None, &QpSettings::default());
    assert_eq!(sol.status, QpStatus::PrimalInfeasible);
}

#[test]
fn equality_rows_hold_to_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let o = random::instance(&mut rng);
        let sol = solve(&to_problem(&o), None, &QpSettings::default());
        let ax = &o.a * &sol.x;
        for i in 0..o.l.len() {
            if o.l[i] == o.u[i] {
                assert!((ax[i] - o.l[i]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let o = random::instance(&mut rng);
    let a = solve(&to_problem(&o), None, &QpSettings::default());
    let b = solve(&to_problem(&o), None, &QpSettings::default());
    assert_eq!(a, b);
}

#[test]
fn warm_start_after_small_perturbation_uses_fewer_iterations() {
    // Fixed-shape family under perturbed linear cost. Polish is off so the
    // count reflects ADMM progress, not the fixed polish schedule.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random::instance(&mut rng);
    let (n, m) = (base.q.len(), base.l.len());
    let settings = QpSettings {
        polish: false,
        ..QpSettings::default()
    };
    let mut warm = ProblemFamily::new(n, m, settings);
    warm.update_and_solve(&to_problem(&base)).unwrap();
    let mut diffs = Vec::new();
    for _ in 0..100 {
        let mut o = OracleQp {
            p: base.p.clone(),
            q: base.q.clone(),
            a: base.a.clone(),
            l: base.l.clone(),
            u: base.u.clone(),
        };
        for v in o.q.iter_mut() {
            *v += rand::Rng::gen_range(&mut rng, -1e-3..1e-3);
        }
        let prob = to_problem(&o);
        let mut cold = ProblemFamily::new(n, m, settings);
        let c = cold.update_and_solve(&prob).unwrap().iterations as i64;
        let w = warm.update_and_solve(&prob).unwrap().iterations as i64;
        diffs.push(c - w);
    }
    diffs.sort();
    assert!(diffs[50] > 0, "median iteration saving {}", diffs[50]);
}
