//! Independent reference solvers used as test oracles.
//!
//! Nothing here shares code with the library's solver paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Newton step `(dx, dnu, ds, dz)`.
type Step = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

pub struct OracleQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl OracleQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Splits `l ≤ Ax ≤ u` into `Ex = b` and `Gx ≤ h`.
    fn split(&self) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.q.len();
        let mut e_rows = Vec::new();
        let mut b = Vec::new();
        let mut g_rows = Vec::new();
        let mut h = Vec::new();
        for i in 0..self.l.len() {
            let row: Vec<f64> = self.a.row(i).iter().copied().collect();
            let (lo, hi) = (self.l[i], self.u[i]);
            if lo.is_finite() && hi.is_finite() && (hi - lo).abs() < 1e-14 {
                e_rows.push(row);
                b.push(lo);
                continue;
            }
            if hi.is_finite() && hi < 1e19 {
                g_rows.push(row.clone());
                h.push(hi);
            }
            if lo.is_finite() && lo > -1e19 {
                g_rows.push(row.iter().map(|v| -v).collect());
                h.push(-lo);
            }
        }
        let to_mat = |rows: &Vec<Vec<f64>>| DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        (
            to_mat(&e_rows),
            DVector::from_vec(b),
            to_mat(&g_rows),
            DVector::from_vec(h),
        )
    }
}

/// Mehrotra predictor–corrector interior-point method on the split form.
/// Returns the primal solution. On badly conditioned instances the dual
/// residual can stall a little above the tight tolerance; the best iterate is
/// then accepted if it is within 1e-8.
pub fn interior_point(qp: &OracleQp) -> Option<DVector<f64>> {
    let n = qp.q.len();
    let (e, b, g, h) = qp.split();
    let me = e.nrows();
    let mi = g.nrows();
    let mut x = DVector::zeros(n);
    let mut nu = DVector::zeros(me);
    let mut s = DVector::from_fn(mi, |i, _| (h[i] - (g.row(i) * &x)[0]).max(1.0));
    let mut z = DVector::from_element(mi, 1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;

    for _ in 0..200 {
        let rd = &qp.p * &x + &qp.q + e.transpose() * &nu + g.transpose() * &z;
        let re = &e * &x - &b;
        let ri = &g * &x + &s - &h;
        let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
        let scale = 1.0 + qp.q.amax() + h.amax().max(b.amax());
        if rd.amax() < 1e-10 * scale
            && re.amax() < 1e-10 * scale
            && ri.amax() < 1e-10 * scale
            && mu < 1e-11
        {
            return Some(x);
        }
        let merit = (rd.amax().max(re.amax()).max(ri.amax()) / scale).max(mu);
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, x.clone()));
        }

        let w = DVector::from_fn(mi, |i, _| z[i] / s[i]);
        let mut h11 = qp.p.clone();
        for i in 0..mi {
            let gi = g.row(i);
            h11 += gi.transpose() * gi * w[i];
        }
        let dim = n + me;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h11);
        kkt.view_mut((0, n), (n, me)).copy_from(&e.transpose());
        kkt.view_mut((n, 0), (me, n)).copy_from(&e);
        for i in 0..n {
            kkt[(i, i)] += 1e-13;
        }
        for i in 0..me {
            kkt[(n + i, n + i)] -= 1e-13;
        }
        let lu = kkt.full_piv_lu();

        let solve = |rc: &DVector<f64>| -> Option<Step> {
            // rhs = [−rd + Gᵀ S⁻¹(rc − Z ri); −re]
            let t = DVector::from_fn(mi, |i, _| (rc[i] - z[i] * ri[i]) / s[i]);
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(-&rd + g.transpose() * &t));
            rhs.rows_mut(n, me).copy_from(&(-&re));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dnu = sol.rows(n, me).into_owned();
            let gdx = &g * &dx;
            let ds = -&ri - &gdx;
            let dz = DVector::from_fn(mi, |i, _| (-rc[i] + z[i] * ri[i] + z[i] * gdx[i]) / s[i]);
            Some((dx, dnu, ds, dz))
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            let mut a: f64 = 1.0;
            for i in 0..v.len() {
                if dv[i] < 0.0 {
                    a = a.min(-v[i] / dv[i]);
                }
            }
            a
        };

        let rc_aff = s.component_mul(&z);
        let (_, _, ds_a, dz_a) = solve(&rc_aff)?;
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if mi > 0 {
            (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / mi as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3) } else { 0.0 };
        let rc = DVector::from_fn(mi, |i, _| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu);
        let (dx, dnu, ds, dz) = solve(&rc)?;
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += &dx * alpha;
        nu += &dnu * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
    }
    best.filter(|(m, _)| *m < 1e-8).map(|(_, x)| x)
}

/// Exhaustive active-set enumeration for small problems: every subset of
/// inequality rows is tried as active, the equality-constrained minimizer is
/// found with a least-squares KKT solve, and the best feasible one wins.
pub fn enumerate_active_sets(qp: &OracleQp) -> Option<DVector<f64>> {
    let n = qp.q.len();
    let (e, b, g, h) = qp.split();
    let mi = g.nrows();
    assert!(mi <= 16, "enumeration oracle is exponential");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = e.nrows() + act.len();
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
        rhs.rows_mut(0, n).copy_from(&(-&qp.q));
        let mut r = n;
        for i in 0..e.nrows() {
            for j in 0..n {
                kkt[(r, j)] = e[(i, j)];
                kkt[(j, r)] = e[(i, j)];
            }
            rhs[r] = b[i];
            r += 1;
        }
        for &i in &act {
            for j in 0..n {
                kkt[(r, j)] = g[(i, j)];
                kkt[(j, r)] = g[(i, j)];
            }
            rhs[r] = h[i];
            r += 1;
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(mut sol) = svd.solve(&rhs, 1e-11) else {
            continue;
        };
        // The SVD solve alone leaves residuals near 1e-9; refine.
        for _ in 0..2 {
            let Ok(d) = svd.solve(&(&rhs - &kkt * &sol), 1e-11) else {
                break;
            };
            sol += d;
        }
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if (&g * &x - &h).iter().any(|v| *v > 1e-9) {
            continue;
        }
        let f = qp.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf - 1e-12) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Projected gradient on `min ½xᵀPx + qᵀx` over `{x : Gx ≤ h}` using a
/// Dykstra projection onto the polyhedron. Slow but simple.
pub fn projected_gradient(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    x0: DVector<f64>,
    iters: usize,
) -> DVector<f64> {
    let lmax = p.clone().symmetric_eigenvalues().amax().max(1e-9);
    let step = 1.0 / lmax;
    let mut x = project_polyhedron(g, h, &x0, 500);
    for _ in 0..iters {
        let grad = p * &x + q;
        x = project_polyhedron(g, h, &(&x - grad * step), 500);
    }
    x
}

fn project_polyhedron(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    v: &DVector<f64>,
    sweeps: usize,
) -> DVector<f64> {
    let m = g.nrows();
    let mut x = v.clone();
    let mut incr = vec![DVector::zeros(v.len()); m];
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for i in 0..m {
            let gi = g.row(i).transpose();
            let y = &x + &incr[i];
            let viol = gi.dot(&y) - h[i];
            let proj = if viol > 0.0 {
                &y - &gi * (viol / gi.norm_squared())
            } else {
                y.clone()
            };
            incr[i] = &y - &proj;
            moved = moved.max((&proj - &x).amax());
            x = proj;
        }
        if moved < 1e-15 {
            break;
        }
    }
    x
}

pub mod random {
    use super::OracleQp;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    pub const INF: f64 = f64::INFINITY;

    /// Random feasible convex QP with `n ≤ 20` variables and `m ≤ 30` rows.
    /// Roughly a third of instances have a singular `P`; those get box rows
    /// on every variable so the problem stays bounded.
    pub fn instance<R: Rng>(rng: &mut R) -> OracleQp {
        let n = rng.gen_range(2..=20usize);
        let singular = rng.gen_bool(0.35) && n <= 15;
        let rank = if singular { rng.gen_range(0..n) } else { n };
        let m_gen = if singular {
            rng.gen_range(0..=(30 - n))
        } else {
            rng.gen_range(1..=30)
        };

        let mut p = DMatrix::zeros(n, n);
        if rank > 0 {
            let f = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
            p = &f * f.transpose();
        }
        if !singular {
            for i in 0..n {
                p[(i, i)] += rng.gen_range(0.05..1.0);
            }
        }
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));

        let m = m_gen + if singular { n } else { 0 };
        let mut a = DMatrix::zeros(m, n);
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        for i in 0..m_gen {
            for j in 0..n {
                a[(i, j)] = rng.gen_range(-1.0..1.0);
            }
            let ax = (a.row(i) * &x0)[0];
            match rng.gen_range(0..10) {
                0 => {
                    l[i] = ax;
                    u[i] = ax;
                }
                1 | 2 => {
                    l[i] = -INF;
                    u[i] = ax + rng.gen_range(0.0..0.5);
                }
                3 | 4 => {
                    l[i] = ax - rng.gen_range(0.0..0.5);
                    u[i] = INF;
                }
                _ => {
                    l[i] = ax - rng.gen_range(0.0..0.5);
                    u[i] = ax + rng.gen_range(0.0..0.5);
                }
            }
        }
        // Equality rows beyond n would almost surely be inconsistent.
        let eq_rows: Vec<usize> = (0..m_gen).filter(|&i| l[i] == u[i]).collect();
        for &i in eq_rows.iter().skip(n / 2) {
            l[i] -= 0.1;
            u[i] += 0.1;
        }
        for k in 0..m - m_gen {
            let i = m_gen + k;
            a[(i, k)] = 1.0;
            l[i] = x0[k] - rng.gen_range(0.1..2.0);
            u[i] = x0[k] + rng.gen_range(0.1..2.0);
        }
        OracleQp { p, q, a, l, u }
    }
}
