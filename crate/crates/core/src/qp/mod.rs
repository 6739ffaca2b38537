//! Small dense convex QP solver.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! with `P` symmetric positive semi-definite and `l`, `u` allowed to hold
//! infinities. The solver is an operator-splitting (ADMM) iteration with a
//! cached dense factorization, residual-balancing step size updates, and an
//! active-set polish. [`ProblemFamily`] keeps the workspace and warm-start
//! slots for a fixed problem shape so repeated solves do not allocate.

mod admm;
mod family;
pub(crate) mod linalg;

use nalgebra::{DMatrix, DVector, RealField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::Workspace;
pub use family::ProblemFamily;

/// Bounds at or beyond this magnitude are treated as infinite.
pub const INFINITY_BOUND: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("bad problem data: {0}")]
    BadData(String),
    #[error("cost matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotConvex(f64),
    #[error("shape mismatch: family is (n={expected_n}, m={expected_m}), data is (n={n}, m={m})")]
    ShapeMismatch {
        expected_n: usize,
        expected_m: usize,
        n: usize,
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

/// Canonical QP data. Construct through [`QpProblem::new`], which validates
/// shapes, finiteness and convexity and symmetrizes `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: RealField + Copy = f64> {
    p: DMatrix<T>,
    q: DVector<T>,
    a: DMatrix<T>,
    l: DVector<T>,
    u: DVector<T>,
}

impl<T: RealField + Copy> QpProblem<T> {
    pub fn new(
        p: DMatrix<T>,
        q: DVector<T>,
        a: DMatrix<T>,
        l: DVector<T>,
        u: DVector<T>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        let m = l.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(QpError::BadData(format!(
                "P is {}x{}, expected {n}x{n}",
                p.nrows(),
                p.ncols()
            )));
        }
        if a.ncols() != n || a.nrows() != m || u.len() != m {
            return Err(QpError::BadData(format!(
                "A is {}x{} with |l|={m}, |u|={}, expected {m}x{n}",
                a.nrows(),
                a.ncols(),
                u.len()
            )));
        }
        if p.iter()
            .chain(q.iter())
            .chain(a.iter())
            .any(|v| !v.is_finite())
        {
            return Err(QpError::BadData("non-finite entry in P, q or A".into()));
        }
        if l.iter().chain(u.iter()).any(|v| v.partial_cmp(v).is_none()) {
            return Err(QpError::BadData("NaN bound".into()));
        }
        for i in 0..m {
            if l[i] > u[i] {
                return Err(QpError::BadData(format!("l[{i}] > u[{i}]")));
            }
        }
        let half: T = nalgebra::convert(0.5);
        let p = (&p + p.transpose()) * half;
        check_psd(&p)?;
        let big: T = nalgebra::convert(INFINITY_BOUND);
        let l = l.map(|v| if v <= -big { -big } else { v });
        let u = u.map(|v| if v >= big { big } else { v });
        Ok(Self { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.l.len()
    }

    pub fn p(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn q(&self) -> &DVector<T> {
        &self.q
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn l(&self) -> &DVector<T> {
        &self.l
    }

    pub fn u(&self) -> &DVector<T> {
        &self.u
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        let half: T = nalgebra::convert(0.5);
        (x.transpose() * &self.p * x)[(0, 0)] * half + self.q.dot(x)
    }

    /// `‖Ax − Π[l,u](Ax)‖∞`
    pub fn primal_residual(&self, x: &DVector<T>) -> T {
        let ax = &self.a * x;
        let mut r = T::zero();
        for i in 0..ax.len() {
            let c = ax[i].max(self.l[i]).min(self.u[i]);
            r = r.max((ax[i] - c).abs());
        }
        r
    }

    /// `‖Px + q + Aᵀy‖∞`
    pub fn dual_residual(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        linalg::inf_norm(&(&self.p * x + &self.q + self.a.transpose() * y))
    }

    pub(crate) fn shape(&self) -> (usize, usize) {
        (self.num_vars(), self.num_constraints())
    }
}

fn check_psd<T: RealField + Copy>(p: &DMatrix<T>) -> Result<(), QpError> {
    if p.nrows() == 0 {
        return Ok(());
    }
    let eig = p.clone().symmetric_eigenvalues();
    let min = eig.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    let scale = T::one().max(linalg_max_abs(p));
    let tol: T = nalgebra::convert(1e-9);
    if min < -(tol * scale) {
        let min_f64: f64 = nalgebra::try_convert(min).unwrap_or(f64::NAN);
        return Err(QpError::NotConvex(min_f64));
    }
    Ok(())
}

fn linalg_max_abs<T: RealField + Copy>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

/// Solver settings. Defaults: absolute and relative tolerance 1e-6, 4000
/// iterations, polish enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    /// Iterations between step-size rebalancing; 0 disables it.
    pub adaptive_rho_interval: usize,
    pub polish: bool,
    /// Upper bound on iterative refinement steps; refinement stops early
    /// once the KKT residual reaches rounding level.
    pub polish_refine_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            eps_dual_inf: 1e-5,
            max_iter: 4000,
            adaptive_rho_interval: 25,
            polish: true,
            polish_refine_iter: 25,
        }
    }
}

impl QpSettings {
    /// Looser tolerances suited to single-precision solves.
    pub fn single_precision() -> Self {
        Self {
            eps_abs: 1e-4,
            eps_rel: 1e-4,
            eps_prim_inf: 1e-3,
            eps_dual_inf: 1e-3,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: RealField + Copy = f64> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub objective: T,
    pub polished: bool,
}

impl<T: RealField + Copy> QpSolution<T> {
    pub(crate) fn empty(n: usize, m: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(m),
            status: QpStatus::MaxIter,
            iterations: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            objective: T::zero(),
            polished: false,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Primal/dual starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart<T: RealField + Copy = f64> {
    pub x: DVector<T>,
    pub y: DVector<T>,
}

/// One-shot solve with a fresh workspace.
pub fn solve<T: RealField + Copy>(
    problem: &QpProblem<T>,
    warm: Option<&WarmStart<T>>,
    settings: &QpSettings,
) -> QpSolution<T> {
    let (n, m) = problem.shape();
    let mut ws = Workspace::new(n, m, settings);
    ws.load(problem);
    if let Some(w) = warm {
        ws.warm_start(&w.x, &w.y);
    }
    ws.run(settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn projection_onto_lower_bound() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            dv(&[0.0, 0.0]),
            DMatrix::identity(2, 2),
            dv(&[1.0, 1.0]),
            dv(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem::new(
            DMatrix::from_diagonal(&dv(&[2.0, 2.0])),
            dv(&[-2.0, -4.0]),
            DMatrix::identity(2, 2),
            dv(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            dv(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_equalities_are_primal_infeasible() {
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            dv(&[0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            dv(&[1.0, 2.0]),
            dv(&[1.0, 2.0]),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::default());
        assert_eq!(s.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn unbounded_linear_cost_is_dual_infeasible() {
        let p = QpProblem::new(
            DMatrix::zeros(1, 1),
            dv(&[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            dv(&[0.0]),
            dv(&[f64::INFINITY]),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::default());
        assert_eq!(s.status, QpStatus::DualInfeasible);
    }

    #[test]
    fn rejects_bad_data() {
        let r = QpProblem::new(
            DMatrix::identity(1, 1),
            dv(&[f64::NAN]),
            DMatrix::identity(1, 1),
            dv(&[0.0]),
            dv(&[1.0]),
        );
        assert!(matches!(r, Err(QpError::BadData(_))));
        let r = QpProblem::new(
            DMatrix::from_diagonal(&dv(&[1.0, -1.0])),
            dv(&[0.0, 0.0]),
            DMatrix::identity(2, 2),
            dv(&[0.0, 0.0]),
            dv(&[1.0, 1.0]),
        );
        assert!(matches!(r, Err(QpError::NotConvex(_))));
        let r = QpProblem::new(
            DMatrix::identity(1, 1),
            dv(&[0.0]),
            DMatrix::identity(1, 1),
            dv(&[2.0]),
            dv(&[1.0]),
        );
        assert!(matches!(r, Err(QpError::BadData(_))));
    }

    #[test]
    fn asymmetric_cost_is_symmetrized() {
        let p = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            dv(&[0.0, 0.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DVector::zeros(0),
        )
        .unwrap();
        assert_eq!(p.p()[(0, 1)], 0.5);
        assert_eq!(p.p()[(1, 0)], 0.5);
    }

    #[test]
    fn single_precision_solve() {
        let p = QpProblem::<f32>::new(
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]),
            DVector::from_row_slice(&[1.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.7, 0.7]),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::single_precision());
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 0.3).abs() < 1e-3 && (s.x[1] - 0.7).abs() < 1e-3);
    }
}
