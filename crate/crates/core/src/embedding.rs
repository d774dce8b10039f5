//! Fitting the whole pipeline and producing diffusion coordinates, for the
//! training points and for new points.
//!
//! Coordinates use the eigenfunctions normalized against the probability
//! measure `w / sum(w)`, i.e. `|omega|_2 * psi_k`, so that the constant
//! eigenfunction is identically one and the embedding does not change when
//! the affinity is multiplied by a constant. Column `k` holds
//! `lambda_{k+1}^t |omega|_2 psi_{k+1}(x)`; the constant pair is dropped.

use alloc::format;
use alloc::vec::Vec;

use crate::affinity::{
    compute_densities, gaussian_affinity, median_bandwidth, normalize_affinity, normalize_rows,
    validate_assumptions, AffinityMatrix, DensityPair, NormalizedAffinity, Provenance,
    ValidationReport, WeightedMeasure,
};
use crate::data::{select_reference, Measure, PointSet, ReferenceSet, Strategy};
use crate::error::{Error, Result, Stage};
use crate::linalg::Matrix;
use crate::spectral::{
    eigendecompose, extend_eigenfunctions, extend_rows, gram, ReferenceGram, SpectralModel,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Median squared distance between `X` and `Y`.
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub strategy: Strategy,
    pub ref_size: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
    pub cutoff: f64,
    pub density_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            strategy: Strategy::All,
            ref_size: 0,
            seed: 0,
            bandwidth: Bandwidth::Median,
            cutoff: crate::DEFAULT_CUTOFF,
            density_tol: crate::DEFAULT_DENSITY_TOL,
        }
    }
}

/// A fitted model together with the in-sample intermediates.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: SpectralModel,
    /// In-sample eigenfunctions, `m x r`.
    pub psi: Matrix,
    pub alpha: AffinityMatrix,
    pub densities: DensityPair,
    pub weights: WeightedMeasure,
    pub beta: NormalizedAffinity,
    pub gram: ReferenceGram,
    pub report: ValidationReport,
}

/// Reference selection, Gaussian affinity, then [`fit_affinity`].
pub fn fit(x: &PointSet, mu: &Measure, config: &FitConfig) -> Result<Fit> {
    let y = select_reference(x, config.strategy, config.ref_size, config.seed)
        .map_err(|e| e.at(Stage::Reference))?;
    let epsilon = match config.bandwidth {
        Bandwidth::Median => median_bandwidth(x, &y).map_err(|e| e.at(Stage::Bandwidth))?,
        Bandwidth::Fixed(eps) => eps,
    };
    let alpha = gaussian_affinity(x, &y, epsilon).map_err(|e| e.at(Stage::Affinity))?;
    fit_affinity(alpha, Some(y), mu, config.cutoff, config.density_tol)
}

/// Validation, densities, `beta`, Gram, eigendecomposition and in-sample
/// extension for a given affinity.
pub fn fit_affinity(
    alpha: AffinityMatrix,
    reference: Option<ReferenceSet>,
    mu: &Measure,
    cutoff: f64,
    density_tol: f64,
) -> Result<Fit> {
    let report = validate_assumptions(&alpha, mu, density_tol).map_err(|e| e.at(Stage::Validation))?;
    if let Some(e) = report.first_violation() {
        return Err(e.at(Stage::Validation));
    }
    let (densities, weights) =
        compute_densities(&alpha, mu, density_tol).map_err(|e| e.at(Stage::Densities))?;
    let beta = normalize_affinity(&alpha, &densities).map_err(|e| e.at(Stage::Normalization))?;
    let a = gram(&beta, &weights).map_err(|e| e.at(Stage::Gram))?;
    let pairs = eigendecompose(&a, cutoff).map_err(|e| e.at(Stage::Eigen))?;
    let model = SpectralModel::new(
        pairs,
        densities.reference.clone(),
        reference,
        alpha.provenance().clone(),
        alpha.m(),
        density_tol,
    )
    .map_err(|e| e.at(Stage::Eigen))?;
    let psi = extend_eigenfunctions(&model, &beta).map_err(|e| e.at(Stage::Extension))?;
    Ok(Fit {
        model,
        psi,
        alpha,
        densities,
        weights,
        beta,
        gram: a,
        report,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionEmbedding {
    /// `m' x K`.
    pub coordinates: Matrix,
    pub time: f64,
    /// `lambda_2, ..., lambda_{K+1}`.
    pub eigenvalues: Vec<f64>,
}

impl DiffusionEmbedding {
    pub fn dim(&self) -> usize {
        self.coordinates.cols()
    }
}

fn check_embedding_args(model: &SpectralModel, t: f64, k: usize) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("diffusion time {t} must be finite and >= 0")));
    }
    let r = model.rank();
    if k + 1 > r {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {k} exceeds r - 1 = {} retained non-constant eigenpairs (r = {r})",
            r.saturating_sub(1)
        )));
    }
    Ok(())
}

fn coordinates(model: &SpectralModel, psi: &Matrix, t: f64, k: usize) -> DiffusionEmbedding {
    let norm = model.omega_norm();
    let eigenvalues: Vec<f64> = model.eigenvalues()[1..=k].to_vec();
    let scale: Vec<f64> = eigenvalues.iter().map(|&l| libm::pow(l, t) * norm).collect();
    let coordinates = Matrix::from_fn(psi.rows(), k, |x, c| scale[c] * psi[(x, c + 1)]);
    DiffusionEmbedding {
        coordinates,
        time: t,
        eigenvalues,
    }
}

/// Column `k` is `lambda_{k+1}^t |omega|_2 Psi[:, k+1]`.
pub fn diffusion_coordinates(model: &SpectralModel, psi: &Matrix, t: f64, k: usize) -> Result<DiffusionEmbedding> {
    check_embedding_args(model, t, k)?;
    if psi.cols() < k + 1 {
        return Err(Error::DimensionMismatch {
            what: "eigenfunction columns",
            expected: k + 1,
            found: psi.cols(),
        });
    }
    Ok(coordinates(model, psi, t, k))
}

/// Out-of-sample coordinates. Rows listed in `rejected` had a data density
/// at or below the model tolerance and hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Extension {
    pub embedding: DiffusionEmbedding,
    /// Raw eigenfunctions at the new points, `m' x r`.
    pub psi: Matrix,
    pub rejected: Vec<usize>,
}

impl Extension {
    pub fn is_complete(&self) -> bool {
        self.rejected.is_empty()
    }

    /// Fails with [`Error::Underflow`] if any point was rejected.
    pub fn into_result(self) -> Result<DiffusionEmbedding> {
        if self.rejected.is_empty() {
            Ok(self.embedding)
        } else {
            Err(Error::Underflow {
                points: self.rejected,
            })
        }
    }
}

/// Evaluates the stored affinity builder at `x_new`, normalizes with the
/// frozen `omega`, and extends the stored eigenvectors.
pub fn extend_new_points(model: &SpectralModel, x_new: &PointSet, t: f64, k: usize) -> Result<Extension> {
    check_embedding_args(model, t, k)?;
    let epsilon = match model.provenance() {
        Provenance::Gaussian { epsilon } => *epsilon,
        Provenance::External { .. } => return Err(Error::ExternalAffinity),
    };
    let y = model.reference().ok_or(Error::ExternalAffinity)?;
    let alpha = gaussian_affinity(x_new, y, epsilon)?;
    let a = alpha.values();
    let big: Vec<f64> = (0..a.rows())
        .map(|i| a.row(i).iter().fold(0.0, |s, v| s + v))
        .collect();
    let tol = model.density_tol();
    let rejected: Vec<usize> = (0..big.len())
        .filter(|&i| !(big[i].is_finite() && big[i] > tol))
        .collect();
    let beta = normalize_rows(a, &big, model.omega());
    let mut psi = extend_rows(&beta, model.eigenvalues(), model.eigenvectors());
    for &i in &rejected {
        psi.row_mut(i).fill(f64::NAN);
    }
    let embedding = coordinates(model, &psi, t, k);
    Ok(Extension {
        embedding,
        psi,
        rejected,
    })
}
