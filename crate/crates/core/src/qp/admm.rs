use nalgebra::{DMatrix, DVector, RealField};

use super::linalg::{cholesky_in_place, cholesky_solve, inf_norm, ldlt_in_place, ldlt_solve};
use super::{QpProblem, QpSettings, QpSolution, QpStatus, INFINITY_BOUND};

fn c<T: RealField + Copy>(v: f64) -> T {
    nalgebra::convert(v)
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const POLISH_DELTA: f64 = 1e-7;
/// Active-set corrections tried by one polish.
const POLISH_ROUNDS: usize = 4;
const EARLY_POLISH_INTERVAL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

/// Preallocated ADMM state for one problem shape.
///
/// All buffers are sized at construction; loading data, solving and polishing
/// reuse them.
#[derive(Debug, Clone)]
pub struct Workspace<T: RealField + Copy> {
    n: usize,
    m: usize,
    p: DMatrix<T>,
    q: DVector<T>,
    a: DMatrix<T>,
    l: DVector<T>,
    u: DVector<T>,
    kinds: Vec<RowKind>,
    rho: T,
    rho_vec: DVector<T>,
    factor: DMatrix<T>,
    factor_valid: bool,
    x: DVector<T>,
    z: DVector<T>,
    y: DVector<T>,
    x_prev: DVector<T>,
    y_prev: DVector<T>,
    xt: DVector<T>,
    zt: DVector<T>,
    rhs: DVector<T>,
    tmp_n: DVector<T>,
    tmp_n2: DVector<T>,
    tmp_m: DVector<T>,
    kkt: DMatrix<T>,
    kkt_rhs: DVector<T>,
    kkt_sol: DVector<T>,
    kkt_res: DVector<T>,
    active: Vec<Option<bool>>,
    active_idx: Vec<usize>,
}

impl<T: RealField + Copy> Workspace<T> {
    pub fn new(n: usize, m: usize, settings: &QpSettings) -> Self {
        let z = |k| DVector::zeros(k);
        Self {
            n,
            m,
            p: DMatrix::zeros(n, n),
            q: z(n),
            a: DMatrix::zeros(m, n),
            l: z(m),
            u: z(m),
            kinds: vec![RowKind::Inequality; m],
            rho: c(settings.rho),
            rho_vec: z(m),
            factor: DMatrix::zeros(n, n),
            factor_valid: false,
            x: z(n),
            z: z(m),
            y: z(m),
            x_prev: z(n),
            y_prev: z(m),
            xt: z(n),
            zt: z(m),
            rhs: z(n),
            tmp_n: z(n),
            tmp_n2: z(n),
            tmp_m: z(m),
            kkt: DMatrix::zeros(n + m, n + m),
            kkt_rhs: z(n + m),
            kkt_sol: z(n + m),
            kkt_res: z(n + m),
            active: vec![None; m],
            active_idx: Vec::with_capacity(m),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Copies problem data in. The factorization is invalidated when the
    /// matrices or the constraint classification change.
    pub(crate) fn load(&mut self, problem: &QpProblem<T>) {
        debug_assert_eq!(problem.shape(), (self.n, self.m));
        if !self.factor_valid || &self.p != problem.p() || &self.a != problem.a() {
            self.p.copy_from(problem.p());
            self.a.copy_from(problem.a());
            self.factor_valid = false;
        }
        self.q.copy_from(problem.q());
        self.l.copy_from(problem.l());
        self.u.copy_from(problem.u());
        let big: T = c(INFINITY_BOUND * 0.999);
        for i in 0..self.m {
            let kind = if self.l[i] <= -big && self.u[i] >= big {
                RowKind::Free
            } else if (self.u[i] - self.l[i]).abs() <= c::<T>(1e-12) * (T::one() + self.u[i].abs())
            {
                RowKind::Equality
            } else {
                RowKind::Inequality
            };
            if kind != self.kinds[i] {
                self.kinds[i] = kind;
                self.factor_valid = false;
            }
        }
    }

    pub(crate) fn warm_start(&mut self, x: &DVector<T>, y: &DVector<T>) {
        if x.len() == self.n && y.len() == self.m {
            self.x.copy_from(x);
            self.y.copy_from(y);
            self.a.mul_to(&self.x, &mut self.z);
            for i in 0..self.m {
                self.z[i] = self.z[i].max(self.l[i]).min(self.u[i]);
            }
        }
    }

    pub(crate) fn cold_start(&mut self) {
        self.x.fill(T::zero());
        self.y.fill(T::zero());
        self.z.fill(T::zero());
    }

    pub(crate) fn set_rho(&mut self, rho: T) {
        if rho != self.rho {
            self.rho = rho;
            self.factor_valid = false;
        }
    }

    fn update_rho_vec(&mut self) {
        for i in 0..self.m {
            self.rho_vec[i] = match self.kinds[i] {
                RowKind::Free => c(RHO_MIN),
                RowKind::Inequality => self.rho,
                RowKind::Equality => self.rho * c(RHO_EQ_SCALE),
            };
        }
    }

    fn factorize(&mut self, sigma: T) -> bool {
        self.update_rho_vec();
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.p[(i, j)];
                for k in 0..m {
                    s += self.a[(k, i)] * self.rho_vec[k] * self.a[(k, j)];
                }
                if i == j {
                    s += sigma;
                }
                self.factor[(i, j)] = s;
                self.factor[(j, i)] = s;
            }
        }
        self.factor_valid = cholesky_in_place(&mut self.factor, n);
        self.factor_valid
    }

    fn project(&self, i: usize, v: T) -> T {
        v.max(self.l[i]).min(self.u[i])
    }

    /// Runs ADMM from the current iterate.
    pub(crate) fn run(&mut self, settings: &QpSettings) -> QpSolution<T> {
        let mut out = QpSolution::empty(self.n, self.m);
        self.run_into(settings, &mut out);
        out
    }

    /// Runs ADMM and writes the result into `out` without allocating.
    pub(crate) fn run_into(&mut self, settings: &QpSettings, out: &mut QpSolution<T>) {
        let (n, m) = (self.n, self.m);
        let sigma: T = c(settings.sigma);
        let alpha: T = c(settings.alpha);
        let eps_abs: T = c(settings.eps_abs);
        let eps_rel: T = c(settings.eps_rel);
        if !self.factor_valid && !self.factorize(sigma) {
            return self.finish(QpStatus::MaxIter, 0, false, out);
        }
        let mut status = QpStatus::MaxIter;
        let mut iter = 0;
        // The rebalancing interval doubles after every update so that the
        // step size cannot cycle indefinitely.
        let mut rho_interval = settings.adaptive_rho_interval;
        let mut next_rho_check = rho_interval;
        while iter < settings.max_iter {
            iter += 1;
            self.x_prev.copy_from(&self.x);
            self.y_prev.copy_from(&self.y);

            // rhs = σx − q + Aᵀ(ρ∘z − y)
            for k in 0..m {
                self.tmp_m[k] = self.rho_vec[k] * self.z[k] - self.y[k];
            }
            self.a.tr_mul_to(&self.tmp_m, &mut self.rhs);
            for i in 0..n {
                self.rhs[i] += sigma * self.x[i] - self.q[i];
            }
            self.xt.copy_from(&self.rhs);
            cholesky_solve(&self.factor, &mut self.xt, n);
            self.a.mul_to(&self.xt, &mut self.zt);

            for i in 0..n {
                self.x[i] = alpha * self.xt[i] + (T::one() - alpha) * self.x_prev[i];
            }
            for k in 0..m {
                let zh = alpha * self.zt[k] + (T::one() - alpha) * self.z[k];
                let zn = self.project(k, zh + self.y[k] / self.rho_vec[k]);
                self.y[k] += self.rho_vec[k] * (zh - zn);
                self.z[k] = zn;
            }

            let (rp, rd, sp, sd) = self.residuals();
            if rp <= eps_abs + eps_rel * sp && rd <= eps_abs + eps_rel * sd {
                if rp <= eps_abs && rd <= eps_abs {
                    status = QpStatus::Solved;
                    break;
                }
                // Converged only in the relative sense; a solved status
                // promises absolute residuals, so certify or keep going.
                if settings.polish && self.polish(settings, Some(eps_abs)) {
                    return self.finish(QpStatus::Solved, iter, true, out);
                }
            }
            if self.primal_infeasible(c(settings.eps_prim_inf)) {
                status = QpStatus::PrimalInfeasible;
                break;
            }
            if self.dual_infeasible(c(settings.eps_dual_inf)) {
                status = QpStatus::DualInfeasible;
                break;
            }
            // Slow tails are common on degenerate problems; an exact solve on
            // the guessed active set often already satisfies the KKT system.
            if settings.polish
                && iter % EARLY_POLISH_INTERVAL == 0
                && self.polish(settings, Some(eps_abs))
            {
                return self.finish(QpStatus::Solved, iter, true, out);
            }
            if rho_interval > 0 && iter == next_rho_check && m > 0 {
                next_rho_check += rho_interval;
                let ratio = (rp / (sp + c(1e-30))) / (rd / (sd + c(1e-30)) + c(1e-30));
                let new_rho = (self.rho * ratio.sqrt()).max(c(RHO_MIN)).min(c(RHO_MAX));
                if new_rho > self.rho * c(5.0) || new_rho < self.rho * c(0.2) {
                    self.rho = new_rho;
                    rho_interval *= 2;
                    next_rho_check = iter + rho_interval;
                    if !self.factorize(sigma) {
                        break;
                    }
                }
            }
        }
        if status == QpStatus::MaxIter && settings.polish && self.polish(settings, Some(eps_abs)) {
            return self.finish(QpStatus::Solved, iter, true, out);
        }
        let polished = status == QpStatus::Solved && settings.polish && self.polish(settings, None);
        self.finish(status, iter, polished, out)
    }

    /// Returns (primal residual, dual residual, primal scale, dual scale).
    fn residuals(&mut self) -> (T, T, T, T) {
        self.a.mul_to(&self.x, &mut self.tmp_m);
        let mut rp = T::zero();
        let mut ax_norm = T::zero();
        let mut z_norm = T::zero();
        for k in 0..self.m {
            rp = rp.max((self.tmp_m[k] - self.z[k]).abs());
            ax_norm = ax_norm.max(self.tmp_m[k].abs());
            z_norm = z_norm.max(self.z[k].abs());
        }
        self.p.mul_to(&self.x, &mut self.tmp_n);
        self.a.tr_mul_to(&self.y, &mut self.tmp_n2);
        let px_norm = inf_norm(&self.tmp_n);
        let aty_norm = inf_norm(&self.tmp_n2);
        let q_norm = inf_norm(&self.q);
        let mut rd = T::zero();
        for i in 0..self.n {
            rd = rd.max((self.tmp_n[i] + self.q[i] + self.tmp_n2[i]).abs());
        }
        (
            rp,
            rd,
            ax_norm.max(z_norm),
            px_norm.max(aty_norm).max(q_norm),
        )
    }

    fn primal_infeasible(&mut self, eps: T) -> bool {
        if self.m == 0 {
            return false;
        }
        let big: T = c(INFINITY_BOUND * 0.999);
        for k in 0..self.m {
            self.tmp_m[k] = self.y[k] - self.y_prev[k];
        }
        let dy_norm = inf_norm(&self.tmp_m);
        if dy_norm <= c(1e-30) {
            return false;
        }
        self.a.tr_mul_to(&self.tmp_m, &mut self.tmp_n);
        if inf_norm(&self.tmp_n) > eps * dy_norm {
            return false;
        }
        let mut support = T::zero();
        for k in 0..self.m {
            let d = self.tmp_m[k];
            if d > T::zero() {
                if self.u[k] >= big {
                    return false;
                }
                support += self.u[k] * d;
            } else if d < T::zero() {
                if self.l[k] <= -big {
                    return false;
                }
                support += self.l[k] * d;
            }
        }
        support < -eps * dy_norm
    }

    fn dual_infeasible(&mut self, eps: T) -> bool {
        let big: T = c(INFINITY_BOUND * 0.999);
        for i in 0..self.n {
            self.tmp_n[i] = self.x[i] - self.x_prev[i];
        }
        let dx_norm = inf_norm(&self.tmp_n);
        if dx_norm <= c(1e-30) {
            return false;
        }
        if self.q.dot(&self.tmp_n) > -eps * dx_norm {
            return false;
        }
        self.p.mul_to(&self.tmp_n, &mut self.tmp_n2);
        if inf_norm(&self.tmp_n2) > eps * dx_norm {
            return false;
        }
        self.a.mul_to(&self.tmp_n, &mut self.tmp_m);
        for k in 0..self.m {
            let v = self.tmp_m[k];
            let tol = eps * dx_norm;
            if self.u[k] < big && v > tol {
                return false;
            }
            if self.l[k] > -big && v < -tol {
                return false;
            }
        }
        true
    }

    /// Solves the equality-constrained problem on the guessed active set and
    /// keeps the result if it beats the ADMM iterate, or, with `require`, only
    /// if both residuals fall below that bound.
    fn polish(&mut self, settings: &QpSettings, require: Option<T>) -> bool {
        let m = self.m;
        for k in 0..m {
            let lower = self.z[k] - self.l[k] < -self.y[k];
            let upper = self.u[k] - self.z[k] < self.y[k];
            self.active[k] = if self.kinds[k] == RowKind::Equality {
                Some(true)
            } else if lower {
                Some(false)
            } else if upper {
                Some(true)
            } else {
                None
            };
        }
        // The guess from the ADMM iterate is wrong at degenerate optima, where
        // a constraint sits on its bound with a zero multiplier. A few
        // active-set corrections fix that.
        let mut solved = false;
        for _ in 0..POLISH_ROUNDS {
            if !self.polish_solve(settings) {
                return false;
            }
            if self.polish_correct(settings) {
                solved = true;
                break;
            }
        }
        if !solved {
            return false;
        }
        let n = self.n;
        for i in 0..n {
            self.x_prev[i] = self.kkt_sol[i];
        }
        self.y_prev.fill(T::zero());
        for (r, &k) in self.active_idx.iter().enumerate() {
            self.y_prev[k] = self.kkt_sol[n + r];
        }

        let (rp_old, rd_old, _, _) = self.residuals();
        std::mem::swap(&mut self.x, &mut self.x_prev);
        std::mem::swap(&mut self.y, &mut self.y_prev);
        self.a.mul_to(&self.x, &mut self.zt);
        for k in 0..m {
            self.zt[k] = self.project(k, self.zt[k]);
        }
        std::mem::swap(&mut self.z, &mut self.zt);
        let (rp, rd, _, _) = self.residuals();
        let floor: T = c(1e-10);
        let accept = match require {
            Some(tol) => rp <= tol && rd <= tol,
            None => (rp <= rp_old || rp <= floor) && (rd <= rd_old || rd <= floor),
        };
        if accept {
            true
        } else {
            std::mem::swap(&mut self.x, &mut self.x_prev);
            std::mem::swap(&mut self.y, &mut self.y_prev);
            std::mem::swap(&mut self.z, &mut self.zt);
            false
        }
    }

    /// Solves the equality-constrained KKT system for the current active set
    /// into `kkt_sol`.
    fn polish_solve(&mut self, settings: &QpSettings) -> bool {
        let (n, m) = (self.n, self.m);
        self.active_idx.clear();
        for k in 0..m {
            if self.active[k].is_some() {
                self.active_idx.push(k);
            }
        }
        let na = self.active_idx.len();
        let dim = n + na;
        let delta: T = c(POLISH_DELTA);

        // Regularized KKT [P+δI Âᵀ; Â −δI].
        for i in 0..n {
            for j in 0..n {
                self.kkt[(i, j)] = self.p[(i, j)];
            }
            self.kkt[(i, i)] += delta;
        }
        for (r, &k) in self.active_idx.iter().enumerate() {
            for j in 0..n {
                self.kkt[(n + r, j)] = self.a[(k, j)];
                self.kkt[(j, n + r)] = self.a[(k, j)];
            }
            for s in 0..na {
                self.kkt[(n + r, n + s)] = T::zero();
            }
            self.kkt[(n + r, n + r)] = -delta;
        }
        if !ldlt_in_place(&mut self.kkt, dim) {
            return false;
        }
        for i in 0..n {
            self.kkt_rhs[i] = -self.q[i];
        }
        for (r, &k) in self.active_idx.iter().enumerate() {
            self.kkt_rhs[n + r] = if self.active[k] == Some(false) {
                self.l[k]
            } else {
                self.u[k]
            };
        }
        for i in 0..dim {
            self.kkt_sol[i] = self.kkt_rhs[i];
        }
        ldlt_solve(&self.kkt, &mut self.kkt_sol, dim);

        // Iterative refinement against the unregularized system, stopped
        // early once the residual is at rounding level.
        let scale = (0..dim).fold(T::one(), |w, i| w.max(self.kkt_rhs[i].abs()));
        let refine_floor = scale * c::<T>(1e-14);
        for _ in 0..settings.polish_refine_iter {
            for i in 0..n {
                let mut s = self.kkt_rhs[i];
                for j in 0..n {
                    s -= self.p[(i, j)] * self.kkt_sol[j];
                }
                for (r, &k) in self.active_idx.iter().enumerate() {
                    s -= self.a[(k, i)] * self.kkt_sol[n + r];
                }
                self.kkt_res[i] = s;
            }
            for (r, &k) in self.active_idx.iter().enumerate() {
                let mut s = self.kkt_rhs[n + r];
                for j in 0..n {
                    s -= self.a[(k, j)] * self.kkt_sol[j];
                }
                self.kkt_res[n + r] = s;
            }
            let worst = (0..dim).fold(T::zero(), |w, i| w.max(self.kkt_res[i].abs()));
            if worst <= refine_floor {
                break;
            }
            ldlt_solve(&self.kkt, &mut self.kkt_res, dim);
            for i in 0..dim {
                self.kkt_sol[i] += self.kkt_res[i];
            }
        }
        (0..dim).all(|i| self.kkt_sol[i].is_finite())
    }

    /// Checks the polished candidate. Rows whose multiplier has the wrong
    /// sign leave the active set and violated rows join it; returns true when
    /// nothing had to change.
    fn polish_correct(&mut self, settings: &QpSettings) -> bool {
        let (n, m) = (self.n, self.m);
        let tol: T = c(settings.eps_abs);
        let mut changed = false;
        for (r, &k) in self.active_idx.iter().enumerate() {
            let yk = self.kkt_sol[n + r];
            let ok = match (self.kinds[k], self.active[k]) {
                (RowKind::Equality, _) => true,
                (_, Some(false)) => yk <= tol,
                _ => yk >= -tol,
            };
            if !ok {
                self.active[k] = None;
                changed = true;
            }
        }
        for i in 0..n {
            self.tmp_n[i] = self.kkt_sol[i];
        }
        self.a.mul_to(&self.tmp_n, &mut self.zt);
        for k in 0..m {
            if self.active[k].is_some() {
                continue;
            }
            if self.zt[k] < self.l[k] - tol {
                self.active[k] = Some(false);
                changed = true;
            } else if self.zt[k] > self.u[k] + tol {
                self.active[k] = Some(true);
                changed = true;
            }
        }
        !changed
    }

    fn finish(
        &mut self,
        status: QpStatus,
        iterations: usize,
        polished: bool,
        out: &mut QpSolution<T>,
    ) {
        let (rp, rd, _, _) = self.residuals();
        self.p.mul_to(&self.x, &mut self.tmp_n);
        let half: T = c(0.5);
        out.objective = half * self.x.dot(&self.tmp_n) + self.q.dot(&self.x);
        out.x.copy_from(&self.x);
        out.y.copy_from(&self.y);
        out.status = status;
        out.iterations = iterations;
        out.primal_residual = rp;
        out.dual_residual = rd;
        out.polished = polished;
    }
}
