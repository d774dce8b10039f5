//! The reference Gram `A`, its eigendecomposition, and the maps between
//! eigenvectors of `A` and eigenfunctions of the kernel operator
//! `(Pf)(x) = sum_x' p(x, x') f(x') w(x')`.
//!
//! `A = beta^T diag(w) beta` is `n x n` and shares its nonzero spectrum with
//! `P`. For an eigenpair `(lambda, v)` of `A`,
//!
//! ```text
//! psi(x) = lambda^(-1/2) sum_i beta(x, y_i) v[i]          (extension)
//! v[i]   = lambda^(-1/2) sum_x beta(x, y_i) psi(x) w(x)   (restriction)
//! ```
//!
//! Everything here is `O(mn + n^3)` except [`materialize_kernel`], which is
//! guarded by `max_m`.

use alloc::format;
use alloc::vec::Vec;

use crate::affinity::{NormalizedAffinity, Provenance, WeightedMeasure};
use crate::data::ReferenceSet;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};

/// Eigenvalues in `[-NEGATIVE_TOL, 0)` are rounding noise and clamp to zero.
pub const NEGATIVE_TOL: f64 = 1e-10;
/// `|lambda_max - 1|` beyond this is flagged on the model.
pub const LAMBDA_MAX_WARN: f64 = 1e-8;

/// `A[i, j] = sum_x beta(x, y_i) beta(x, y_j) w(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGram {
    a: Matrix,
}

impl ReferenceGram {
    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// `max_i |(A omega)_i - omega_i|`.
    pub fn fixed_point_residual(&self, omega: &[f64]) -> f64 {
        self.a
            .mul_vec(omega)
            .iter()
            .zip(omega)
            .fold(0.0, |acc, (a, o)| f64::max(acc, (a - o).abs()))
    }
}

fn check_weights(beta: &NormalizedAffinity, w: &WeightedMeasure) -> Result<()> {
    if beta.m() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "weighted measure",
            expected: beta.m(),
            found: w.len(),
        });
    }
    Ok(())
}

pub fn gram(beta: &NormalizedAffinity, w: &WeightedMeasure) -> Result<ReferenceGram> {
    check_weights(beta, w)?;
    let b = beta.values();
    let n = b.cols();
    let mut a = Matrix::zeros(n, n);
    for (x, &wx) in w.weights().iter().enumerate() {
        let row = b.row(x);
        for i in 0..n {
            let f = row[i] * wx;
            if f == 0.0 {
                continue;
            }
            for j in i..n {
                a[(i, j)] += f * row[j];
            }
        }
    }
    // Only the upper triangle was accumulated; mirroring is the symmetrization.
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    if !a.all_finite() {
        return Err(Error::Numerical("reference Gram has a non-finite entry".into()));
    }
    Ok(ReferenceGram { a })
}

/// Retained eigenpairs of `A`, sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpairs {
    /// Retained eigenvalues `lambda_1 >= ... >= lambda_r > cutoff * lambda_1`.
    pub values: Vec<f64>,
    /// `n x r`, orthonormal columns, sign-normalized.
    pub vectors: Matrix,
    /// The full clamped spectrum, descending.
    pub spectrum: Vec<f64>,
    pub cutoff: f64,
}

impl Eigenpairs {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.spectrum.first().copied().unwrap_or(0.0)
    }
}

/// Flips `v` so its largest-magnitude entry is positive. Entries within a
/// relative `1e-8` of the largest magnitude count as tied; the lowest index wins.
pub(crate) fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-8))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full symmetric eigendecomposition of `A`, keeping pairs with
/// `lambda > cutoff * lambda_max`.
pub fn eigendecompose(a: &ReferenceGram, cutoff: f64) -> Result<Eigenpairs> {
    if !(cutoff.is_finite() && cutoff >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} must be finite and >= 0"
        )));
    }
    let eig = symmetric_eigen(&a.a)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let n = a.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut values = eig.values;
    if let Some(k) = values.iter().position(|&l| l < -NEGATIVE_TOL) {
        return Err(Error::Numerical(format!(
            "reference Gram has eigenvalue {:e} < -{NEGATIVE_TOL:e}; it is not positive semidefinite",
            values[k]
        )));
    }
    for l in values.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    // stable: equal eigenvalues keep solver order
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let spectrum: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let lambda_max = spectrum[0];
    let threshold = cutoff * lambda_max;
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| values[k] > threshold && values[k] > 0.0)
        .collect();
    let mut vectors = eig.vectors.select_columns(&kept);
    for k in 0..kept.len() {
        let mut col = vectors.column(k);
        normalize_sign(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            vectors[(i, k)] = v;
        }
    }
    Ok(Eigenpairs {
        values: kept.iter().map(|&k| values[k]).collect(),
        vectors,
        spectrum,
        cutoff,
    })
}

/// Everything needed to evaluate eigenfunctions at arbitrary points: the
/// retained eigenpairs of `A`, the frozen reference density `omega`, and the
/// affinity builder with the reference coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    pairs: Eigenpairs,
    omega: Vec<f64>,
    reference: Option<ReferenceSet>,
    provenance: Provenance,
    m: usize,
    density_tol: f64,
}

impl SpectralModel {
    /// Assembles a model. `reference` may be `None` only for external affinities.
    pub fn new(
        pairs: Eigenpairs,
        omega: Vec<f64>,
        reference: Option<ReferenceSet>,
        provenance: Provenance,
        m: usize,
        density_tol: f64,
    ) -> Result<Self> {
        let n = pairs.vectors.rows();
        if omega.len() != n {
            return Err(Error::DimensionMismatch {
                what: "omega",
                expected: n,
                found: omega.len(),
            });
        }
        if let Some(y) = &reference {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "reference set",
                    expected: n,
                    found: y.len(),
                });
            }
        } else if matches!(provenance, Provenance::Gaussian { .. }) {
            return Err(Error::InvalidArgument(
                "a Gaussian model needs its reference coordinates".into(),
            ));
        }
        if pairs.values.len() != pairs.vectors.cols() {
            return Err(Error::DimensionMismatch {
                what: "eigenvectors",
                expected: pairs.values.len(),
                found: pairs.vectors.cols(),
            });
        }
        Ok(SpectralModel {
            pairs,
            omega,
            reference,
            provenance,
            m,
            density_tol,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.pairs.values
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.pairs.vectors
    }

    pub fn pairs(&self) -> &Eigenpairs {
        &self.pairs
    }

    /// Retained rank `r`.
    pub fn rank(&self) -> usize {
        self.pairs.values.len()
    }

    pub fn cutoff(&self) -> f64 {
        self.pairs.cutoff
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn reference(&self) -> Option<&ReferenceSet> {
        self.reference.as_ref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Training-set size.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// Point dimension, when reference coordinates are known.
    pub fn d(&self) -> Option<usize> {
        self.reference.as_ref().map(ReferenceSet::dim)
    }

    pub fn density_tol(&self) -> f64 {
        self.density_tol
    }

    /// `|lambda_max - 1| > 1e-8`: the spectrum is off, usually from bad conditioning.
    pub fn lambda_max_warning(&self) -> bool {
        (self.pairs.lambda_max() - 1.0).abs() > LAMBDA_MAX_WARN
    }

    /// `|omega|_2`; the constant eigenfunction equals its reciprocal.
    pub fn omega_norm(&self) -> f64 {
        crate::linalg::norm2(&self.omega)
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    if let Some(k) = values.iter().position(|&l| l.is_nan() || l <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "retained eigenvalue {k} is {} (cutoff misconfigured)",
            values[k]
        )));
    }
    Ok(())
}

/// `psi_k(x) = lambda_k^(-1/2) sum_i beta(x, y_i) V[i, k]`, for any rows of `beta`.
pub(crate) fn extend_rows(beta: &Matrix, values: &[f64], vectors: &Matrix) -> Matrix {
    let scale: Vec<f64> = values.iter().map(|&l| 1.0 / libm::sqrt(l)).collect();
    let mut psi = beta.matmul(vectors);
    for x in 0..psi.rows() {
        for (v, s) in psi.row_mut(x).iter_mut().zip(&scale) {
            *v *= s;
        }
    }
    psi
}

/// Eigenfunction table `Psi` (`m x r`) on the training points.
pub fn extend_eigenfunctions(model: &SpectralModel, beta: &NormalizedAffinity) -> Result<Matrix> {
    if beta.n() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "normalized affinity columns",
            expected: model.n(),
            found: beta.n(),
        });
    }
    check_positive(model.eigenvalues())?;
    Ok(extend_rows(
        beta.values(),
        model.eigenvalues(),
        model.eigenvectors(),
    ))
}

/// `v_k[i] = lambda_k^(-1/2) sum_x beta(x, y_i) psi_k(x) w(x)`, an `n x r` table.
pub fn restrict_eigenfunctions(
    model: &SpectralModel,
    psi: &Matrix,
    beta: &NormalizedAffinity,
    w: &WeightedMeasure,
) -> Result<Matrix> {
    check_weights(beta, w)?;
    if psi.rows() != beta.m() {
        return Err(Error::DimensionMismatch {
            what: "eigenfunction rows",
            expected: beta.m(),
            found: psi.rows(),
        });
    }
    if psi.cols() > model.rank() {
        return Err(Error::DimensionMismatch {
            what: "eigenfunction columns",
            expected: model.rank(),
            found: psi.cols(),
        });
    }
    if beta.n() != model.n() {
        return Err(Error::DimensionMismatch {
            what: "normalized affinity columns",
            expected: model.n(),
            found: beta.n(),
        });
    }
    let values = &model.eigenvalues()[..psi.cols()];
    check_positive(values)?;
    let b = beta.values();
    let mut v = Matrix::zeros(b.cols(), psi.cols());
    for (x, &wx) in w.weights().iter().enumerate() {
        for i in 0..b.cols() {
            let f = b[(x, i)] * wx;
            if f == 0.0 {
                continue;
            }
            for (o, &p) in v.row_mut(i).iter_mut().zip(psi.row(x)) {
                *o += f * p;
            }
        }
    }
    for i in 0..v.rows() {
        for (o, &l) in v.row_mut(i).iter_mut().zip(values) {
            *o /= libm::sqrt(l);
        }
    }
    Ok(v)
}

/// `Pf = beta (beta^T (w . f))`, without forming `p`.
pub fn apply_operator(beta: &NormalizedAffinity, w: &WeightedMeasure, f: &[f64]) -> Result<Vec<f64>> {
    check_weights(beta, w)?;
    if f.len() != beta.m() {
        return Err(Error::DimensionMismatch {
            what: "function values",
            expected: beta.m(),
            found: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("function values must be finite".into()));
    }
    let wf: Vec<f64> = f.iter().zip(w.weights()).map(|(a, b)| a * b).collect();
    let g = beta.values().tr_mul_vec(&wf);
    Ok(beta.values().mul_vec(&g))
}

/// `max_x |sum_i beta(x, y_i) (beta^T w)_i - 1|`, the weighted row-sum
/// deviation of `p`. By symmetry it is also the column-sum deviation.
pub fn bistochastic_residual(beta: &NormalizedAffinity, w: &WeightedMeasure) -> f64 {
    if beta.m() != w.len() {
        return f64::NAN;
    }
    let s = beta.values().tr_mul_vec(w.weights());
    beta.values()
        .mul_vec(&s)
        .iter()
        .fold(0.0, |acc, r| f64::max(acc, (r - 1.0).abs()))
}

/// The dense kernel `p = beta beta^T` (`m x m`).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    p: Matrix,
}

impl KernelMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn m(&self) -> usize {
        self.p.rows()
    }

    /// `max_x |sum_x' p(x, x') w(x') - 1|`.
    pub fn weighted_row_residual(&self, w: &WeightedMeasure) -> f64 {
        self.p
            .mul_vec(w.weights())
            .iter()
            .fold(0.0, |acc, r| f64::max(acc, (r - 1.0).abs()))
    }

    /// The operator matrix `p diag(w)`.
    pub fn operator_matrix(&self, w: &WeightedMeasure) -> Matrix {
        let ww = w.weights();
        Matrix::from_fn(self.m(), self.m(), |i, j| self.p[(i, j)] * ww[j])
    }

    /// Eigenvalues of `p diag(w)`, descending, via the similar symmetric
    /// matrix `diag(sqrt w) p diag(sqrt w)`.
    pub fn operator_eigenvalues(&self, w: &WeightedMeasure) -> Result<Vec<f64>> {
        let s: Vec<f64> = w.weights().iter().map(|&v| libm::sqrt(v)).collect();
        let sym = Matrix::from_fn(self.m(), self.m(), |i, j| s[i] * self.p[(i, j)] * s[j]);
        let mut vals = symmetric_eigen(&sym)
            .ok_or_else(|| Error::Numerical("dense eigensolver did not converge".into()))?
            .values;
        vals.sort_by(|a, b| b.total_cmp(a));
        Ok(vals)
    }

    /// Smallest eigenvalue of `p` itself (PSD check).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let vals = symmetric_eigen(&self.p)
            .ok_or_else(|| Error::Numerical("dense eigensolver did not converge".into()))?
            .values;
        Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Forms `p(x, x') = sum_i beta(x, y_i) beta(x', y_i)`. Refuses `m > max_m`.
pub fn materialize_kernel(beta: &NormalizedAffinity, max_m: usize) -> Result<KernelMatrix> {
    let m = beta.m();
    if m > max_m {
        return Err(Error::TooLarge { m, max_m });
    }
    let b = beta.values();
    let mut p = Matrix::zeros(m, m);
    for x in 0..m {
        for y in x..m {
            let v: f64 = b.row(x).iter().zip(b.row(y)).map(|(a, c)| a * c).sum();
            p[(x, y)] = v;
            p[(y, x)] = v;
        }
    }
    Ok(KernelMatrix { p })
}
