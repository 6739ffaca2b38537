//! Tilting of separating planes so that the two half-spaces they bound keep
//! the robots at least their safety radii apart.
//!
//! A robot on a cable of length `l` moves on a sphere. Rotating a plane
//! through the sphere center by `α = 2 asin(r / 2l)` moves its great circle
//! by a chord of length `r`. Each normal is rotated about `n × e3`, which
//! lifts the normal toward `+z` and pulls both boundaries away from the
//! vertical, where the robots fly.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{AllocationError, Halfspace};
use crate::math::{rotation_about, E1, E2, E3};

/// `α = 2 asin(r / 2l)`
pub fn tilt_angle(r: f64, l: f64) -> Result<f64, AllocationError> {
    if !(r > 0.0 && l > 0.0 && r < 2.0 * l) {
        return Err(AllocationError::BadGeometry { r, l });
    }
    Ok(2.0 * (r / (2.0 * l)).asin())
}

/// Unit rotation axis `n × e3`. When `n` is vertical the axis is replaced by
/// `n × e1` (or `e2`), and the flag is set.
pub fn tilt_axis(n: &Vector3<f64>) -> (Vector3<f64>, bool) {
    let nh = n.normalize();
    let k = nh.cross(&E3);
    if k.norm() >= 1e-9 {
        return (k.normalize(), false);
    }
    let k = nh.cross(&E1);
    if k.norm() >= 1e-9 {
        (k.normalize(), true)
    } else {
        (E2, true)
    }
}

/// Unit normal `n` rotated by `angle` about its tilt axis.
pub fn tilt(n: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (axis, _) = tilt_axis(n);
    rotation_about(&axis, angle) * n.normalize()
}

pub(crate) fn tilt_normals(
    n: &Vector3<f64>,
    alpha_i: f64,
    alpha_j: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    (tilt(n, alpha_i), -tilt(n, -alpha_j))
}

/// Half-spaces through the payload for robots `i` (negative side of `n_ij`)
/// and `j` (positive side).
pub fn tilt_hyperplanes_pointmass(
    n_ij: &Vector3<f64>,
    r_i: f64,
    r_j: f64,
    l_i: f64,
    l_j: f64,
) -> Result<(Halfspace, Halfspace), AllocationError> {
    if !(n_ij.norm() > 0.0) {
        return Err(AllocationError::BadInput(
            "separating normal is zero".into(),
        ));
    }
    if tilt_axis(n_ij).1 {
        return Err(AllocationError::DegenerateAxis);
    }
    let (ni, nj) = tilt_normals(n_ij, tilt_angle(r_i, l_i)?, tilt_angle(r_j, l_j)?);
    Ok((Halfspace::new(ni, 0.0), Halfspace::new(nj, 0.0)))
}

/// Highest point of the circle where the sphere `|x − center| = radius`
/// meets the plane `nᵀx = a`.
pub fn circle_top(
    center: &Vector3<f64>,
    radius: f64,
    n: &Vector3<f64>,
    a: f64,
) -> Result<Vector3<f64>, AllocationError> {
    let nn = n.norm();
    let nh = n / nn;
    let d = (n.dot(center) - a) / nn;
    if d.abs() > radius * (1.0 + 1e-12) {
        return Err(AllocationError::NoIntersection);
    }
    let c = center - d * nh;
    let rho = (radius * radius - d * d).max(0.0).sqrt();
    let up = E3 - nh * nh.z;
    let dir = if up.norm() > 1e-12 {
        up.normalize()
    } else {
        tilt_axis(n).0
    };
    Ok(c + rho * dir)
}

/// Tilted half-spaces for a rigid payload, in the payload frame. Each passes
/// through its attachment point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTilt {
    pub i: Halfspace,
    pub j: Halfspace,
    /// Highest points of the two cable circles on the separating plane.
    pub top_i: Vector3<f64>,
    pub top_j: Vector3<f64>,
    /// Set when the separating normal was vertical and a substitute rotation
    /// axis was used.
    pub degenerate_axis: bool,
}

/// Builds, for each robot, the plane through its attachment point and the
/// top of its cable circle on the separating plane `nᵀx = a`, then tilts it.
#[allow(clippy::too_many_arguments)]
pub fn tilt_hyperplanes_rigid(
    n_ij: &Vector3<f64>,
    a: f64,
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
    r_i: f64,
    r_j: f64,
    l_i: f64,
    l_j: f64,
) -> Result<RigidTilt, AllocationError> {
    if !(n_ij.norm() > 0.0) {
        return Err(AllocationError::BadInput(
            "separating normal is zero".into(),
        ));
    }
    let alpha_i = tilt_angle(r_i, l_i)?;
    let alpha_j = tilt_angle(r_j, l_j)?;
    let (k, degenerate_axis) = tilt_axis(n_ij);
    let top_i = circle_top(p_ai, l_i, n_ij, a)?;
    let top_j = circle_top(p_aj, l_j, n_ij, a)?;
    let intermediate = |top: &Vector3<f64>, p_a: &Vector3<f64>| {
        let m = k.cross(&(top - p_a));
        let m = if m.norm() > 1e-12 {
            m.normalize()
        } else {
            n_ij.normalize()
        };
        if m.dot(n_ij) < 0.0 {
            -m
        } else {
            m
        }
    };
    let ni = tilt(&intermediate(&top_i, p_ai), alpha_i);
    let nj = -tilt(&intermediate(&top_j, p_aj), -alpha_j);
    Ok(RigidTilt {
        i: Halfspace::new(ni, ni.dot(p_ai)),
        j: Halfspace::new(nj, nj.dot(p_aj)),
        top_i,
        top_j,
        degenerate_axis,
    })
}

/// Planes parallel to the separator through each attachment point; used when
/// a cable sphere does not reach the separating plane.
pub fn untilted_rigid(
    n_ij: &Vector3<f64>,
    p_ai: &Vector3<f64>,
    p_aj: &Vector3<f64>,
) -> (Halfspace, Halfspace) {
    let nh = n_ij.normalize();
    (
        Halfspace::new(nh, nh.dot(p_ai)),
        Halfspace::new(-nh, -nh.dot(p_aj)),
    )
}
