//! Point sets, point masses, and reference-set selection.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// `m` points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    coords: Matrix,
}

impl PointSet {
    /// Builds a point set from equal-width rows of finite coordinates.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "point {i} has {} coordinates, expected {d}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), d, data)
    }

    pub fn from_row_major(m: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("point set is empty".into()));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("points have dimension 0".into()));
        }
        if data.len() != m * d {
            return Err(Error::DimensionMismatch {
                what: "point buffer",
                expected: m * d,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {} of point {} is not finite",
                k % d,
                k / d
            )));
        }
        Ok(PointSet {
            coords: Matrix::from_row_major(m, d, data),
        })
    }

    /// Number of points `m`.
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.coords.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    /// The points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> PointSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        PointSet {
            coords: Matrix::from_row_major(indices.len(), d, data),
        }
    }
}

/// Strictly positive point masses `mu`. They need not sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("measure is empty".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {} (weights must be finite and > 0)",
                weights[i]
            )));
        }
        Ok(Measure { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `mu = (1/m) sum_i delta_{x_i}`.
pub fn uniform_measure(m: usize) -> Result<Measure> {
    if m == 0 {
        return Err(Error::InvalidArgument("uniform measure needs m >= 1".into()));
    }
    Measure::new(alloc::vec![1.0 / m as f64; m])
}

/// The reference set `Y`, optionally remembering where its points came from in `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    points: PointSet,
    source: Option<Vec<usize>>,
}

impl ReferenceSet {
    /// A reference set given directly, not drawn from a point set.
    pub fn new(points: PointSet) -> Self {
        ReferenceSet {
            points,
            source: None,
        }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Indices into the parent point set, when `Y` was selected from it.
    pub fn source_indices(&self) -> Option<&[usize]> {
        self.source.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// `Y = X`.
    All,
    /// Sample without replacement, deterministic in the seed.
    Uniform,
    /// Farthest-point sampling seeded at index 0.
    Fps,
}

/// Chooses the reference set. `size` is ignored for [`Strategy::All`].
///
/// Uniform samples are returned in ascending index order. FPS returns points
/// in selection order: index 0 first, then repeatedly the point whose minimum
/// Euclidean distance to the chosen set is largest, lowest index on ties.
pub fn select_reference(x: &PointSet, strategy: Strategy, size: usize, seed: u64) -> Result<ReferenceSet> {
    let m = x.len();
    let indices: Vec<usize> = match strategy {
        Strategy::All => (0..m).collect(),
        Strategy::Uniform | Strategy::Fps if size == 0 || size > m => {
            return Err(Error::InvalidArgument(format!(
                "reference size {size} must be in 1..={m}"
            )));
        }
        Strategy::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, m, size).into_vec();
            idx.sort_unstable();
            idx
        }
        Strategy::Fps => farthest_point_sampling(x, size),
    };
    Ok(ReferenceSet {
        points: x.subset(&indices),
        source: Some(indices),
    })
}

fn farthest_point_sampling(x: &PointSet, size: usize) -> Vec<usize> {
    let m = x.len();
    let mut chosen = Vec::with_capacity(size);
    let mut min_dist = alloc::vec![f64::INFINITY; m];
    let mut next = 0;
    for _ in 0..size {
        chosen.push(next);
        let p = x.point(next);
        for (i, md) in min_dist.iter_mut().enumerate() {
            *md = md.min(squared_distance(p, x.point(i)));
        }
        // strict > keeps the lowest index on ties
        let mut best = 0;
        for i in 1..m {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        next = best;
    }
    chosen
}
