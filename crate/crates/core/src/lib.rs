//! Bi-stochastic kernels built from an asymmetric affinity between a weighted
//! point set `X` and a small reference set `Y`.
//!
//! The pipeline is
//!
//! 1. pick a reference set ([`data::select_reference`]),
//! 2. evaluate the affinity `alpha(x, y_i)` ([`affinity::gaussian_affinity`]),
//! 3. derive the densities `Omega`, `omega` and the normalized affinity `beta`,
//! 4. form the `n x n` reference Gram `A` and eigendecompose it,
//! 5. extend the eigenvectors of `A` to eigenfunctions of the kernel operator,
//!    on the training points or on new points.
//!
//! The kernel `p(x, x') = sum_i beta(x, y_i) beta(x', y_i)` is bi-stochastic
//! with respect to the weighted measure `Omega^2 mu`, with no iteration. The
//! [`sinkhorn`] module carries the classical iterative balancing for comparison.
//!
//! Every production path costs `O(mn + n^3)`; dense `m x m` work is opt-in.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod affinity;
pub mod data;
pub mod embedding;
mod error;
pub mod linalg;
pub mod sinkhorn;
pub mod spectral;

pub use affinity::{
    compute_densities, gaussian_affinity, median_bandwidth, normalize_affinity,
    validate_assumptions, AffinityMatrix, DensityPair, NormalizedAffinity, Provenance,
    ValidationReport, WeightedMeasure,
};
pub use data::{select_reference, uniform_measure, Measure, PointSet, ReferenceSet, Strategy};
pub use embedding::{
    diffusion_coordinates, extend_new_points, fit, fit_affinity, Bandwidth, DiffusionEmbedding,
    Extension, Fit, FitConfig,
};
pub use error::{Condition, Error, Stage};
pub use linalg::Matrix;
pub use sinkhorn::{sinkhorn_balance, stochastic_residual, SinkhornResult, SymmetricKernel};
pub use spectral::{
    apply_operator, bistochastic_residual, eigendecompose, extend_eigenfunctions, gram,
    materialize_kernel, restrict_eigenfunctions, Eigenpairs, KernelMatrix, ReferenceGram,
    SpectralModel,
};

/// Default lower bound for `Omega` and `omega` (a denormal guard).
pub const DEFAULT_DENSITY_TOL: f64 = 1e-300;
/// Default relative eigenvalue cutoff for retention.
pub const DEFAULT_CUTOFF: f64 = 1e-12;
/// Default guard on the number of points for dense kernel materialization.
pub const DEFAULT_MAX_M: usize = 2000;
