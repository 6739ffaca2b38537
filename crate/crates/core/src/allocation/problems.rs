//! QP data for the allocation stages. Each builder returns a fixed shape for a
//! given rig so the pipeline can reuse one problem family per stage.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{AllocationError, AllocationMap, DesiredWrench, Halfspace};
use crate::math::skew;
use crate::qp::QpProblem;

/// Force split for one pair. Variables `(F_i, F_j)` in the world frame.
///
/// ```text
/// min ‖F_i‖² + ‖F_j‖² + ‖M_d − (p̂_ai R0ᵀ F_i + p̂_aj R0ᵀ F_j)‖²
/// s.t. F_i + F_j = F_d
/// ```
pub fn fd_problem(
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
    r0: &Matrix3<f64>,
    wrench: &DesiredWrench,
) -> Result<QpProblem, AllocationError> {
    let mut b = DMatrix::zeros(3, 6);
    b.view_mut((0, 0), (3, 3))
        .copy_from(&(skew(p_ai) * r0.transpose()));
    b.view_mut((0, 3), (3, 3))
        .copy_from(&(skew(p_aj) * r0.transpose()));
    let p = 2.0 * (DMatrix::identity(6, 6) + b.transpose() * &b);
    let m = DVector::from_column_slice(wrench.moment.as_slice());
    let q = -2.0 * b.transpose() * m;
    let mut a = DMatrix::zeros(3, 6);
    a.view_mut((0, 0), (3, 3)).fill_with_identity();
    a.view_mut((0, 3), (3, 3)).fill_with_identity();
    let f = DVector::from_column_slice(wrench.force.as_slice());
    Ok(QpProblem::new(p, q, a, f.clone(), f)?)
}

/// Separating plane through the payload for a point-mass rig. Variable `n`.
///
/// ```text
/// min ‖n‖² + λ_s (nᵀF_d)²
/// s.t. nᵀp_i ≤ −1,  nᵀp_j ≥ 1
/// ```
pub fn svm_pointmass_problem(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    f_d: &Vector3<f64>,
    lambda_s: f64,
) -> Result<QpProblem, AllocationError> {
    let f = DVector::from_column_slice(f_d.as_slice());
    let p = 2.0 * (DMatrix::identity(3, 3) + lambda_s * &f * f.transpose());
    let a = DMatrix::from_row_slice(2, 3, &[p_i.x, p_i.y, p_i.z, p_j.x, p_j.y, p_j.z]);
    let l = DVector::from_row_slice(&[f64::NEG_INFINITY, 1.0]);
    let u = DVector::from_row_slice(&[-1.0, f64::INFINITY]);
    Ok(QpProblem::new(p, DVector::zeros(3), a, l, u)?)
}

/// Hybrid hard/soft margin plane for a rigid payload, all points in the
/// payload frame. Variables `(n, a, s1, s2)`.
///
/// ```text
/// min ‖n‖² + λ_s (s1 + s2)
/// s.t. nᵀp_i − a ≤ −1,   nᵀp_ai − a ≤ −1
///      nᵀp_j − a ≥ 1,    nᵀp_aj − a ≥ 1
///      nᵀ(p_ai + F_i) − a ≤ −1 + s1
///      nᵀ(p_aj + F_j) − a ≥ 1 − s2
///      s1, s2 ≥ 0
/// ```
#[allow(clippy::too_many_arguments)]
pub fn svm_rigid_problem(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
    f_i: &Vector3<f64>,
    f_j: &Vector3<f64>,
    lambda_s: f64,
) -> Result<QpProblem, AllocationError> {
    let mut p = DMatrix::zeros(6, 6);
    for k in 0..3 {
        p[(k, k)] = 2.0;
    }
    let q = DVector::from_row_slice(&[0.0, 0.0, 0.0, 0.0, lambda_s, lambda_s]);
    let inf = f64::INFINITY;
    let ti = p_ai + f_i;
    let tj = p_aj + f_j;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(8, 6, &[
        p_i.x, p_i.y, p_i.z, -1.0, 0.0, 0.0,
        p_ai.x, p_ai.y, p_ai.z, -1.0, 0.0, 0.0,
        p_j.x, p_j.y, p_j.z, -1.0, 0.0, 0.0,
        p_aj.x, p_aj.y, p_aj.z, -1.0, 0.0, 0.0,
        ti.x, ti.y, ti.z, -1.0, -1.0, 0.0,
        tj.x, tj.y, tj.z, -1.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let l = DVector::from_row_slice(&[-inf, -inf, 1.0, 1.0, -inf, 1.0, 0.0, 0.0]);
    let u = DVector::from_row_slice(&[-1.0, -1.0, inf, inf, -1.0, inf, inf, inf]);
    Ok(QpProblem::new(p, q, a, l, u)?)
}

/// Cable-force QP over the stacked world-frame forces.
///
/// ```text
/// min ½‖μ‖² + λ‖μ0 − μ‖²
/// s.t. P·blkdiag(R0ᵀ)·μ = rhs,  n_kᵀμ_k − a_k ≤ 0
/// ```
pub fn mu_problem(
    map: &AllocationMap,
    r0: &Matrix3<f64>,
    rhs: &DVector<f64>,
    halfspaces: &[(usize, Halfspace)],
    mu0: Option<&[Vector3<f64>]>,
    lambda: f64,
) -> Result<QpProblem, AllocationError> {
    let n = map.n();
    let nv = 3 * n;
    if !(lambda >= 0.0) {
        return Err(AllocationError::BadInput(format!(
            "preference weight must be >= 0, got {lambda}"
        )));
    }
    let (lambda, q) = match mu0 {
        Some(mu0) if lambda > 0.0 => {
            if mu0.len() != n {
                return Err(AllocationError::BadInput(format!(
                    "{} preferred forces for {n} cables",
                    mu0.len()
                )));
            }
            let q = DVector::from_iterator(
                nv,
                mu0.iter().flat_map(|m| m.iter().map(|v| -2.0 * lambda * v)),
            );
            (lambda, q)
        }
        _ => (0.0, DVector::zeros(nv)),
    };
    let p = DMatrix::identity(nv, nv) * (1.0 + 2.0 * lambda);

    let rows = map.rows();
    let m = rows + halfspaces.len();
    let mut a = DMatrix::zeros(m, nv);
    let mut l = DVector::from_element(m, f64::NEG_INFINITY);
    let mut u = DVector::zeros(m);
    a.view_mut((0, 0), (rows, nv))
        .copy_from(&map.world_matrix(r0));
    l.rows_mut(0, rows).copy_from(rhs);
    u.rows_mut(0, rows).copy_from(rhs);
    for (r, (k, h)) in halfspaces.iter().enumerate() {
        if *k >= n {
            return Err(AllocationError::BadInput(format!(
                "half-space for cable {k} of {n}"
            )));
        }
        a.view_mut((rows + r, 3 * k), (1, 3))
            .copy_from(&h.normal.transpose());
        u[rows + r] = h.offset;
    }
    Ok(QpProblem::new(p, q, a, l, u)?)
}
