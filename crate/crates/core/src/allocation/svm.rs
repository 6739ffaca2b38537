use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::problems::{fd_problem, svm_pointmass_problem, svm_rigid_problem};
use super::{AllocationError, DesiredWrench};
use crate::qp::{self, QpSettings, QpSolution, QpStatus};

/// Separating plane `nᵀx = a` with the slack on the two soft constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidSeparator {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub slack: (f64, f64),
}

pub(crate) fn fd_from(x: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(x[0], x[1], x[2]),
        Vector3::new(x[3], x[4], x[5]),
    )
}

pub(crate) fn separator_from(x: &DVector<f64>) -> RigidSeparator {
    RigidSeparator {
        normal: Vector3::new(x[0], x[1], x[2]),
        offset: x[3],
        slack: (x[4], x[5]),
    }
}

pub(crate) fn check(sol: &QpSolution, infeasible: AllocationError) -> Result<(), AllocationError> {
    match sol.status {
        QpStatus::Solved => Ok(()),
        QpStatus::PrimalInfeasible => Err(infeasible),
        s => Err(AllocationError::SolverFailure(s)),
    }
}

/// True when no plane through the origin puts `p_i` and `p_j` on strictly
/// opposite sides, which happens when they lie on one ray from the origin.
pub(crate) fn same_ray(p_i: &Vector3<f64>, p_j: &Vector3<f64>) -> bool {
    let scale = p_i.norm() * p_j.norm();
    scale == 0.0 || (p_i.cross(p_j).norm() <= 1e-12 * scale && p_i.dot(p_j) > 0.0)
}

/// Splits the payload wrench into forces for cables `i` and `j` whose sum is
/// exactly `F_d` and whose moment is as close to `M_d` as the norm penalty
/// allows.
pub fn qp_fd(
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
    r0: &Matrix3<f64>,
    wrench: &DesiredWrench,
    settings: &QpSettings,
) -> Result<(Vector3<f64>, Vector3<f64>), AllocationError> {
    let sol = qp::solve(&fd_problem(p_ai, p_aj, r0, wrench)?, None, settings);
    check(&sol, AllocationError::Infeasible)?;
    Ok(fd_from(&sol.x))
}

/// Normal of the plane through the payload that separates robot `i`
/// (negative side) from robot `j` (positive side) with maximal margin, biased
/// toward containing `F_d`. Positions are relative to the payload.
pub fn qp_svm_pointmass(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    f_d: &Vector3<f64>,
    lambda_s: f64,
    settings: &QpSettings,
) -> Result<Vector3<f64>, AllocationError> {
    if same_ray(p_i, p_j) {
        return Err(AllocationError::InfeasiblePair);
    }
    let sol = qp::solve(
        &svm_pointmass_problem(p_i, p_j, f_d, lambda_s)?,
        None,
        settings,
    );
    check(&sol, AllocationError::InfeasiblePair)?;
    Ok(Vector3::new(sol.x[0], sol.x[1], sol.x[2]))
}

/// Plane separating robot `i` and its attachment from robot `j` and its
/// attachment, softly keeping the shifted desired forces on the right sides.
/// All points and forces are in the payload frame.
#[allow(clippy::too_many_arguments)]
pub fn qp_svm_rigid(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
    f_i: &Vector3<f64>,
    f_j: &Vector3<f64>,
    lambda_s: f64,
    settings: &QpSettings,
) -> Result<RigidSeparator, AllocationError> {
    let sol = qp::solve(
        &svm_rigid_problem(p_i, p_j, p_ai, p_aj, f_i, f_j, lambda_s)?,
        None,
        settings,
    );
    check(&sol, AllocationError::InfeasiblePair)?;
    Ok(separator_from(&sol.x))
}
