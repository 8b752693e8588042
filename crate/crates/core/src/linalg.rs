//! Small dense symmetric-positive-definite kernels shared by the GMRF code
//! and the logistic baseline: Cholesky factorization and triangular solves.
//!
//! Matrices are row-major `Vec<f64>` of size n×n; only problems with n up to
//! a few hundred ever reach these routines, so no blocking or pivoting is
//! attempted.

use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;

/// Factors a symmetric positive definite matrix `a` (row-major n×n) into its
/// lower-triangular Cholesky factor L with `a = L·Lᵀ`. Returns the index of
/// the first non-positive pivot on failure.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, usize> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = alloc::vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(j);
        }
        let root = diag.sqrt();
        l[j * n + j] = root;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / root;
        }
    }
    Ok(l)
}

/// Solves L·y = b for lower-triangular L.
pub(crate) fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = alloc::vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * y[j];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves Lᵀ·x = b for lower-triangular L.
pub(crate) fn solve_lower_transpose(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = alloc::vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= l[j * n + i] * x[j];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves (L·Lᵀ)·x = b given the Cholesky factor L.
pub(crate) fn solve_spd(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let y = solve_lower(l, n, b);
    solve_lower_transpose(l, n, &y)
}
