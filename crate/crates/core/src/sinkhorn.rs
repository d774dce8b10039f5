//! Sinkhorn-Knopp balancing of a positive symmetric kernel, the iterative
//! baseline for comparison with the one-pass construction.
//!
//! Alternating row and column normalization of a symmetric `k` is folded
//! into one symmetric scaling `diag(d) k diag(d)` with the update
//! `d <- sqrt(d / (k d))`, started from `d = 1`. The target here is classical
//! double stochasticity (counting measure), not stochasticity under `w`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A strictly positive, finite, symmetric `m x m` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricKernel {
    k: Matrix,
}

impl SymmetricKernel {
    pub fn new(k: Matrix) -> Result<Self> {
        if !k.is_square() || k.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel must be square and non-empty, got {} x {}",
                k.rows(),
                k.cols()
            )));
        }
        if let Some(idx) = k.as_slice().iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "kernel entry ({}, {}) = {} is not finite and positive",
                idx / k.cols(),
                idx % k.cols(),
                k.as_slice()[idx]
            )));
        }
        let m = k.rows();
        for i in 0..m {
            for j in i + 1..m {
                let (a, b) = (k[(i, j)], k[(j, i)]);
                if (a - b).abs() > 1e-12 * a.max(b) {
                    return Err(Error::InvalidArgument(format!(
                        "kernel is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(SymmetricKernel { k })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.k
    }

    pub fn m(&self) -> usize {
        self.k.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornResult {
    /// `d` with `diag(d) k diag(d)` balanced.
    pub scaling: Vec<f64>,
    pub balanced: Matrix,
    /// Number of updates applied.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residual of the starting point, then after each update.
    pub trajectory: Vec<f64>,
}

/// Max over all rows and columns of `|sum - 1|`.
pub fn stochastic_residual(m: &Matrix) -> f64 {
    let mut cols = vec![0.0; m.cols()];
    let mut worst: f64 = 0.0;
    for i in 0..m.rows() {
        let mut s = 0.0;
        for (c, &v) in cols.iter_mut().zip(m.row(i)) {
            s += v;
            *c += v;
        }
        worst = worst.max((s - 1.0).abs());
    }
    cols.iter().fold(worst, |acc, c| acc.max((c - 1.0).abs()))
}

fn scaled_residual(k: &Matrix, d: &[f64]) -> f64 {
    let kd = k.mul_vec(d);
    let ktd = k.tr_mul_vec(d);
    d.iter()
        .zip(kd.iter().zip(&ktd))
        .fold(0.0, |acc, (di, (r, c))| {
            acc.max((di * r - 1.0).abs()).max((di * c - 1.0).abs())
        })
}

/// Balances `k` from `d = 1`. Stops at the first iterate whose residual is
/// within `tol`, or after `max_iter` updates with `converged = false`.
pub fn sinkhorn_balance(k: &SymmetricKernel, tol: f64, max_iter: usize) -> Result<SinkhornResult> {
    sinkhorn_balance_from(k, vec![1.0; k.m()], tol, max_iter)
}

/// As [`sinkhorn_balance`], from a given positive starting scaling.
pub fn sinkhorn_balance_from(
    k: &SymmetricKernel,
    mut d: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol {tol} must be finite and > 0")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    if d.len() != k.m() {
        return Err(Error::DimensionMismatch {
            what: "initial scaling",
            expected: k.m(),
            found: d.len(),
        });
    }
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("initial scaling must be positive".into()));
    }
    let km = k.matrix();
    let mut residual = scaled_residual(km, &d);
    let mut trajectory = vec![residual];
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        let kd = km.mul_vec(&d);
        for (di, s) in d.iter_mut().zip(&kd) {
            *di = libm::sqrt(*di / s);
        }
        iterations += 1;
        residual = scaled_residual(km, &d);
        trajectory.push(residual);
    }
    let balanced = Matrix::from_fn(k.m(), k.m(), |i, j| d[i] * km[(i, j)] * d[j]);
    Ok(SinkhornResult {
        scaling: d,
        balanced,
        iterations,
        residual,
        converged: residual <= tol,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_examples() {
        assert_eq!(stochastic_residual(&Matrix::identity(4)), 0.0);
        assert_eq!(stochastic_residual(&Matrix::from_fn(5, 5, |_, _| 1.0)), 4.0);
    }

    #[test]
    fn all_ones_two_by_two() {
        let k = SymmetricKernel::new(Matrix::from_fn(2, 2, |_, _| 1.0)).unwrap();
        let r = sinkhorn_balance(&k, 1e-12, 100).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!(r.scaling.iter().all(|d| (d - h).abs() < 1e-15));
        assert!(r.balanced.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn closed_form_two_by_two() {
        let k = SymmetricKernel::new(Matrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 2.0])).unwrap();
        let r = sinkhorn_balance(&k, 1e-12, 100).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!(r.scaling.iter().all(|d| (d - s).abs() < 1e-15));
        let want = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (v, w) in r.balanced.as_slice().iter().zip(want) {
            assert!((v - w).abs() < 1e-15);
        }
    }

    #[test]
    fn already_balanced_needs_no_iterations() {
        let k = SymmetricKernel::new(Matrix::from_fn(4, 4, |_, _| 0.25)).unwrap();
        let r = sinkhorn_balance(&k, 1e-12, 10).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let k = SymmetricKernel::new(Matrix::from_fn(6, 6, |i, j| 1.0 + ((i * j) % 7) as f64)).unwrap();
        let r = sinkhorn_balance(&k, 1e-15, 1).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(SymmetricKernel::new(Matrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 1.0])).is_err());
        assert!(SymmetricKernel::new(Matrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 1.0])).is_err());
        assert!(SymmetricKernel::new(Matrix::zeros(2, 3)).is_err());
        let k = SymmetricKernel::new(Matrix::from_fn(2, 2, |_, _| 1.0)).unwrap();
        assert!(sinkhorn_balance(&k, 0.0, 10).is_err());
        assert!(sinkhorn_balance(&k, 1e-8, 0).is_err());
    }
}
