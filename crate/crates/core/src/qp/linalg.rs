//! In-place dense factorizations over preallocated storage.
//!
//! Both routines work on the leading `dim × dim` block of a (possibly larger)
//! square buffer so a workspace sized for the largest system can be reused
//! without reallocating.

use nalgebra::{DMatrix, DVector, RealField};

/// Overwrites the lower triangle of `a[..dim, ..dim]` with its Cholesky
/// factor. Returns `false` when a non-positive pivot is met.
pub(crate) fn cholesky_in_place<T: RealField + Copy>(a: &mut DMatrix<T>, dim: usize) -> bool {
    for j in 0..dim {
        let mut d = a[(j, j)];
        for k in 0..j {
            let l = a[(j, k)];
            d -= l * l;
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in (j + 1)..dim {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    true
}

/// Solves `L Lᵀ x = b` in place using the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve<T: RealField + Copy>(l: &DMatrix<T>, b: &mut DVector<T>, dim: usize) {
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in (i + 1)..dim {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// LDLᵀ factorization without pivoting of the leading `dim × dim` block.
///
/// Meant for quasi-definite matrices (positive definite top-left block,
/// negative definite bottom-right block), for which every symmetric
/// permutation is factorizable. Unit lower factor goes below the diagonal,
/// `D` on the diagonal.
pub(crate) fn ldlt_in_place<T: RealField + Copy>(a: &mut DMatrix<T>, dim: usize) -> bool {
    for j in 0..dim {
        let mut d = a[(j, j)];
        for k in 0..j {
            let l = a[(j, k)];
            d -= l * l * a[(k, k)];
        }
        if d == T::zero() || !d.is_finite() {
            return false;
        }
        a[(j, j)] = d;
        for i in (j + 1)..dim {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)] * a[(k, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    true
}

pub(crate) fn ldlt_solve<T: RealField + Copy>(f: &DMatrix<T>, b: &mut DVector<T>, dim: usize) {
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= f[(i, k)] * b[k];
        }
        b[i] = s;
    }
    for i in 0..dim {
        b[i] /= f[(i, i)];
    }
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in (i + 1)..dim {
            s -= f[(k, i)] * b[k];
        }
        b[i] = s;
    }
}

pub(crate) fn inf_norm<T: RealField + Copy>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}
