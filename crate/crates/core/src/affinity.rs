//! The asymmetric affinity `alpha` between data and references, the densities
//! derived from it, and the normalized affinity `beta`.
//!
//! For data points `x` with masses `mu(x)` and references `y_i`:
//!
//! ```text
//! Omega(x)   = sum_i alpha(x, y_i)
//! omega(y_i) = ( sum_x alpha(x, y_i) Omega(x) mu(x) )^(1/2)
//! beta(x, y_i) = alpha(x, y_i) / (Omega(x) omega(y_i))
//! w(x) = Omega(x)^2 mu(x)
//! ```
//!
//! With these, `sum_i beta(x, y_i) omega(y_i) = 1` for every `x` and
//! `sum_x beta(x, y_i) w(x) = omega(y_i)` for every `i`, which together make
//! `p = beta beta^T` bi-stochastic under `w`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::{Measure, PointSet, ReferenceSet};
use crate::error::{Condition, Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// How an affinity was produced. Needed to evaluate it again at new points.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Gaussian { epsilon: f64 },
    /// Supplied by the user; `digest` identifies the source file.
    External { digest: String },
}

impl Provenance {
    pub fn builder_name(&self) -> &'static str {
        match self {
            Provenance::Gaussian { .. } => "gaussian",
            Provenance::External { .. } => "external",
        }
    }
}

/// `m x n` nonnegative affinities `alpha(x, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    values: Matrix,
    provenance: Provenance,
}

impl AffinityMatrix {
    /// Wraps precomputed affinities. Negative and NaN entries are rejected;
    /// infinite entries are left for [`validate_assumptions`] to report.
    pub fn new(values: Matrix, provenance: Provenance) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::InvalidArgument("affinity matrix is empty".into()));
        }
        if let Some(k) = values.as_slice().iter().position(|v| v.is_nan() || *v < 0.0) {
            let n = values.cols();
            return Err(Error::InvalidArgument(format!(
                "affinity entry ({}, {}) is {} (must be >= 0)",
                k / n,
                k % n,
                values.as_slice()[k]
            )));
        }
        Ok(AffinityMatrix { values, provenance })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Rows (data points).
    pub fn m(&self) -> usize {
        self.values.rows()
    }

    /// Columns (reference points).
    pub fn n(&self) -> usize {
        self.values.cols()
    }

    /// `c * alpha`, keeping the provenance.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!("scale {c} must be finite and > 0")));
        }
        Ok(AffinityMatrix {
            values: self.values.map(|v| c * v),
            provenance: self.provenance.clone(),
        })
    }
}

/// `alpha(x, y_i) = exp(-|x - y_i|^2 / epsilon)`.
pub fn gaussian_affinity(x: &PointSet, y: &ReferenceSet, epsilon: f64) -> Result<AffinityMatrix> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth epsilon = {epsilon} must be finite and > 0"
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            what: "reference points",
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let yp = y.points();
    let values = Matrix::from_fn(x.len(), y.len(), |i, j| {
        libm::exp(-squared_distance(x.point(i), yp.point(j)) / epsilon)
    });
    Ok(AffinityMatrix {
        values,
        provenance: Provenance::Gaussian { epsilon },
    })
}

/// Median of the `m * n` squared distances between `X` and `Y`; the mean of
/// the two middle values for an even count.
pub fn median_bandwidth(x: &PointSet, y: &ReferenceSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            what: "reference points",
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let mut d2: Vec<f64> = x
        .iter()
        .flat_map(|p| y.points().iter().map(move |q| squared_distance(p, q)))
        .collect();
    d2.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let k = d2.len();
    let median = if k % 2 == 1 {
        d2[k / 2]
    } else {
        0.5 * (d2[k / 2 - 1] + d2[k / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::DegenerateData)
    }
}

/// `Omega` (one per data point) and `omega` (one per reference point).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityPair {
    pub data: Vec<f64>,
    pub reference: Vec<f64>,
}

/// `w(x) = Omega(x)^2 mu(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedMeasure {
    weights: Vec<f64>,
}

impl WeightedMeasure {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn check_measure(alpha: &AffinityMatrix, mu: &Measure) -> Result<()> {
    if alpha.m() != mu.len() {
        return Err(Error::DimensionMismatch {
            what: "measure",
            expected: alpha.m(),
            found: mu.len(),
        });
    }
    Ok(())
}

/// Row sums in index order, then the weighted column masses.
fn raw_densities(alpha: &AffinityMatrix, mu: &Measure) -> (Vec<f64>, Vec<f64>) {
    let a = alpha.values();
    let big: Vec<f64> = (0..a.rows())
        .map(|i| a.row(i).iter().fold(0.0, |s, v| s + v))
        .collect();
    let mut small_sq = alloc::vec![0.0; a.cols()];
    for (i, (&om, &mu_x)) in big.iter().zip(mu.weights()).enumerate() {
        let f = om * mu_x;
        for (s, &v) in small_sq.iter_mut().zip(a.row(i)) {
            *s += v * f;
        }
    }
    let small = small_sq.into_iter().map(libm::sqrt).collect();
    (big, small)
}

/// Pass/fail for each positivity condition, with offending indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub tol: f64,
    /// `(row, column)` of non-finite affinity entries.
    pub non_finite: Vec<(usize, usize)>,
    non_finite_values: Vec<f64>,
    /// Rows with `Omega(x)` not in `(tol, inf)`.
    pub bad_rows: Vec<usize>,
    /// Columns with `omega(y_i)` not in `(tol, inf)`.
    pub bad_columns: Vec<usize>,
    pub min_data_density: f64,
    pub min_reference_density: f64,
    /// `Omega`, as computed (possibly non-finite or zero).
    pub data_density: Vec<f64>,
    /// `omega`, as computed.
    pub reference_density: Vec<f64>,
}

impl ValidationReport {
    pub fn finite_ok(&self) -> bool {
        self.non_finite.is_empty()
    }

    pub fn data_density_ok(&self) -> bool {
        self.bad_rows.is_empty()
    }

    pub fn reference_density_ok(&self) -> bool {
        self.bad_columns.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.finite_ok() && self.data_density_ok() && self.reference_density_ok()
    }

    /// Whether either density minimum is below `threshold` (a conditioning warning).
    pub fn near_violation(&self, threshold: f64) -> bool {
        self.min_data_density < threshold || self.min_reference_density < threshold
    }

    /// The first failed condition as an error, if any.
    pub fn first_violation(&self) -> Option<Error> {
        if let Some(&(i, _)) = self.non_finite.first() {
            return Some(Error::Assumption {
                condition: Condition::FiniteAffinity,
                index: i,
                value: self.non_finite_values[0],
            });
        }
        if let Some(&i) = self.bad_rows.first() {
            return Some(Error::Assumption {
                condition: Condition::DataDensity,
                index: i,
                value: self.data_density[i],
            });
        }
        if let Some(&j) = self.bad_columns.first() {
            return Some(Error::Assumption {
                condition: Condition::ReferenceDensity,
                index: j,
                value: self.reference_density[j],
            });
        }
        None
    }
}

fn in_range(v: f64, tol: f64) -> bool {
    v.is_finite() && v > tol
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks finiteness of `alpha` and `tol < Omega, omega < inf`. Failures are
/// reported, never returned as errors.
pub fn validate_assumptions(alpha: &AffinityMatrix, mu: &Measure, tol: f64) -> Result<ValidationReport> {
    check_measure(alpha, mu)?;
    let a = alpha.values();
    let non_finite: Vec<(usize, usize)> = (0..a.rows())
        .flat_map(|i| (0..a.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| !a[(i, j)].is_finite())
        .collect();
    let non_finite_values = non_finite.iter().map(|&ij| a[ij]).collect();
    let (big, small) = raw_densities(alpha, mu);
    Ok(ValidationReport {
        tol,
        non_finite,
        non_finite_values,
        bad_rows: (0..big.len()).filter(|&i| !in_range(big[i], tol)).collect(),
        bad_columns: (0..small.len()).filter(|&j| !in_range(small[j], tol)).collect(),
        min_data_density: min_of(&big),
        min_reference_density: min_of(&small),
        data_density: big,
        reference_density: small,
    })
}

/// Computes `(Omega, omega)` and `w = Omega^2 mu`, failing on the first
/// density outside `(tol, inf)`.
pub fn compute_densities(
    alpha: &AffinityMatrix,
    mu: &Measure,
    tol: f64,
) -> Result<(DensityPair, WeightedMeasure)> {
    check_measure(alpha, mu)?;
    let (big, small) = raw_densities(alpha, mu);
    if let Some(i) = big.iter().position(|&v| !in_range(v, tol)) {
        return Err(Error::Assumption {
            condition: Condition::DataDensity,
            index: i,
            value: big[i],
        });
    }
    if let Some(j) = small.iter().position(|&v| !in_range(v, tol)) {
        return Err(Error::Assumption {
            condition: Condition::ReferenceDensity,
            index: j,
            value: small[j],
        });
    }
    let weights = big
        .iter()
        .zip(mu.weights())
        .map(|(om, mu_x)| om * om * mu_x)
        .collect();
    Ok((
        DensityPair {
            data: big,
            reference: small,
        },
        WeightedMeasure { weights },
    ))
}

/// `beta(x, y_i) = alpha(x, y_i) / (Omega(x) omega(y_i))`, an `m x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAffinity {
    values: Matrix,
}

impl NormalizedAffinity {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.rows()
    }

    pub fn n(&self) -> usize {
        self.values.cols()
    }

    /// Used by tests and diagnostics that need to perturb `beta`.
    pub fn from_matrix(values: Matrix) -> Self {
        NormalizedAffinity { values }
    }
}

pub fn normalize_affinity(alpha: &AffinityMatrix, d: &DensityPair) -> Result<NormalizedAffinity> {
    if d.data.len() != alpha.m() {
        return Err(Error::DimensionMismatch {
            what: "data density",
            expected: alpha.m(),
            found: d.data.len(),
        });
    }
    if d.reference.len() != alpha.n() {
        return Err(Error::DimensionMismatch {
            what: "reference density",
            expected: alpha.n(),
            found: d.reference.len(),
        });
    }
    Ok(NormalizedAffinity {
        values: normalize_rows(alpha.values(), &d.data, &d.reference),
    })
}

pub(crate) fn normalize_rows(alpha: &Matrix, big: &[f64], small: &[f64]) -> Matrix {
    Matrix::from_fn(alpha.rows(), alpha.cols(), |i, j| {
        alpha[(i, j)] / (big[i] * small[j])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{select_reference, uniform_measure, Strategy};
    use alloc::vec;

    fn ones(m: usize, n: usize) -> AffinityMatrix {
        AffinityMatrix::new(
            Matrix::from_fn(m, n, |_, _| 1.0),
            Provenance::External { digest: "ones".into() },
        )
        .unwrap()
    }

    fn line(v: &[f64]) -> PointSet {
        PointSet::from_row_major(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_entries() {
        let x = line(&[0.0, 2.0]);
        let y = ReferenceSet::new(line(&[0.0]));
        let a = gaussian_affinity(&x, &y, 4.0).unwrap();
        assert_eq!(a.values()[(0, 0)], 1.0);
        assert!((a.values()[(1, 0)] - 0.36787944117144233).abs() < 1e-16);
        assert_eq!(a.provenance(), &Provenance::Gaussian { epsilon: 4.0 });
        assert!(gaussian_affinity(&x, &y, 0.0).is_err());
        assert!(gaussian_affinity(&x, &y, -1.0).is_err());
    }

    #[test]
    fn median_two_values() {
        let eps = median_bandwidth(&line(&[0.0, 2.0]), &ReferenceSet::new(line(&[0.0]))).unwrap();
        assert_eq!(eps, 2.0);
    }

    #[test]
    fn median_three_by_three() {
        let x = line(&[0.0, 1.0, 2.0]);
        let y = select_reference(&x, Strategy::All, 0, 0).unwrap();
        assert_eq!(median_bandwidth(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn median_degenerate() {
        let x = line(&[3.0, 3.0, 3.0]);
        let y = select_reference(&x, Strategy::All, 0, 0).unwrap();
        assert_eq!(median_bandwidth(&x, &y), Err(Error::DegenerateData));
    }

    #[test]
    fn all_ones_densities() {
        let (m, n) = (5, 3);
        let mu = uniform_measure(m).unwrap();
        let (d, w) = compute_densities(&ones(m, n), &mu, 1e-300).unwrap();
        for &o in &d.data {
            assert!((o - n as f64).abs() < 1e-14);
        }
        for &o in &d.reference {
            assert!((o - (n as f64).sqrt()).abs() < 1e-14);
        }
        for &v in w.weights() {
            assert!((v - (n * n) as f64 / m as f64).abs() < 1e-13);
        }
        let beta = normalize_affinity(&ones(m, n), &d).unwrap();
        for &b in beta.values().as_slice() {
            assert!((b - (n as f64).powf(-1.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point() {
        let c = 2.5;
        let a = AffinityMatrix::new(
            Matrix::from_row_major(1, 1, vec![c]),
            Provenance::External { digest: String::new() },
        )
        .unwrap();
        let mu = Measure::new(vec![1.0]).unwrap();
        let (d, w) = compute_densities(&a, &mu, 1e-300).unwrap();
        assert_eq!(d.data, vec![c]);
        assert_eq!(d.reference, vec![c]);
        assert_eq!(w.weights(), &[c * c]);
        let beta = normalize_affinity(&a, &d).unwrap();
        assert_eq!(beta.values()[(0, 0)], 1.0 / c);
    }

    #[test]
    fn validation_reports_zero_row() {
        let mut v = Matrix::from_fn(4, 2, |_, _| 1.0);
        v.row_mut(2).fill(0.0);
        let a = AffinityMatrix::new(v, Provenance::External { digest: String::new() }).unwrap();
        let mu = uniform_measure(4).unwrap();
        let r = validate_assumptions(&a, &mu, 1e-300).unwrap();
        assert!(!r.passed());
        assert_eq!(r.bad_rows, vec![2]);
        assert!(r.bad_columns.is_empty());
        assert_eq!(r.min_data_density, 0.0);
        assert!(matches!(
            compute_densities(&a, &mu, 1e-300),
            Err(Error::Assumption { condition: Condition::DataDensity, index: 2, .. })
        ));
    }

    #[test]
    fn validation_reports_infinite_entry() {
        let mut v = Matrix::from_fn(2, 2, |_, _| 1.0);
        v[(1, 0)] = f64::INFINITY;
        let a = AffinityMatrix::new(v, Provenance::External { digest: String::new() }).unwrap();
        let r = validate_assumptions(&a, &uniform_measure(2).unwrap(), 1e-300).unwrap();
        assert_eq!(r.non_finite, vec![(1, 0)]);
        assert!(!r.finite_ok());
    }

    #[test]
    fn rejects_negative_affinity() {
        let v = Matrix::from_row_major(1, 2, vec![1.0, -0.5]);
        assert!(AffinityMatrix::new(v, Provenance::External { digest: String::new() }).is_err());
    }

    #[test]
    fn measure_length_checked() {
        assert!(matches!(
            compute_densities(&ones(3, 2), &uniform_measure(2).unwrap(), 1e-300),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
