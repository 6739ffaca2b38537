//! Small SO(3) helpers shared by the simulator, controller and allocator.

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};

pub const E1: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);
pub const E2: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);
pub const E3: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Skew-symmetric (hat) map: `skew(a) * b == a × b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] for (approximately) skew-symmetric input.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Gram–Schmidt on the columns, keeping the first column's direction.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle)
        .to_rotation_matrix()
        .into_inner()
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    rotation_about(&E1, angle)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    rotation_about(&E2, angle)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    rotation_about(&E3, angle)
}

/// Max deviation of `RᵀR` from identity plus deviation of `det R` from one.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let e = r.transpose() * r - Matrix3::identity();
    e.amax().max((r.determinant() - 1.0).abs())
}

/// Attitude error `½ vee(R_dᵀR − RᵀR_d)`.
pub fn attitude_error(r: &Matrix3<f64>, r_des: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * vee(&(r_des.transpose() * r - r.transpose() * r_des))
}

/// Roll, pitch, yaw (ZYX convention) of a rotation matrix.
pub fn euler_zyx(r: &Matrix3<f64>) -> Vector3<f64> {
    let (roll, pitch, yaw) = nalgebra::Rotation3::from_matrix_unchecked(*r).euler_angles();
    Vector3::new(roll, pitch, yaw)
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (a + std::f64::consts::PI) % two_pi;
    if w < 0.0 {
        w += two_pi;
    }
    w - std::f64::consts::PI
}
