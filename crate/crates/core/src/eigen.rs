//! Cyclic Jacobi eigenvalues of real symmetric matrices.
//!
//! Rotations sweep the strict upper triangle in fixed row-cyclic order, so
//! results are bit-reproducible for a given input.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_SWEEPS: usize = 100;

/// Relative tolerance on the input's asymmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues of a symmetric matrix, sorted in descending order.
pub fn eigen_symmetric(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.rows(), got: m.cols() });
    }
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // symmetrize so rounding-level asymmetry cannot bias the rotations
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let target = 1e-12 * a.frobenius_norm();
    let off = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += a[(i, j)] * a[(i, j)];
            }
        }
        (2.0 * s).sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > target.max(f64::MIN_POSITIVE) {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, p, q);
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Annihilates `a[p][q]` with one Jacobi rotation.
fn rotate(a: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);
    let n = a.rows();
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        let np = arp - s * (arq + tau * arp);
        let nq = arq + s * (arp - tau * arq);
        a[(r, p)] = np;
        a[(p, r)] = np;
        a[(r, q)] = nq;
        a[(q, r)] = nq;
    }
}

/// `lambda_1 / lambda_n` of a descending spectrum; infinite when the
/// smallest eigenvalue is not positive.
pub fn condition_number(eig_desc: &[f64]) -> f64 {
    match (eig_desc.first(), eig_desc.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Extreme values of the quadratic form of `m` restricted to unit vectors
/// orthogonal to the all-ones vector, as `(min, max)`.
pub fn restricted_extremes(m: &Matrix) -> Result<(f64, f64)> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::InvalidArgument("restricted spectrum needs n >= 2".into()));
    }
    let q = helmert_basis(n);
    let reduced = q.transpose().matmul(m).matmul(&q);
    let reduced = Matrix::symmetric_from_upper(n - 1, |i, j| 0.5 * (reduced[(i, j)] + reduced[(j, i)]));
    let eig = eigen_symmetric(&reduced)?;
    Ok((*eig.last().expect("n >= 2"), eig[0]))
}

/// Orthonormal basis (as `n x (n-1)` columns) of the complement of `1_n`.
pub fn helmert_basis(n: usize) -> Matrix {
    let mut q = Matrix::zeros(n, n - 1);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}
