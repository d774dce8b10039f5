use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// The positivity/finiteness conditions the affinity must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// Every affinity entry is finite.
    FiniteAffinity,
    /// `tol < Omega(x) < inf` for every data point.
    DataDensity,
    /// `tol < omega(y_i) < inf` for every reference point.
    ReferenceDensity,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::FiniteAffinity => f.write_str("finite affinity"),
            Condition::DataDensity => f.write_str("data density Omega"),
            Condition::ReferenceDensity => f.write_str("reference density omega"),
        }
    }
}

/// Pipeline stage, attached to errors raised by [`crate::fit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Reference,
    Bandwidth,
    Affinity,
    Validation,
    Densities,
    Normalization,
    Gram,
    Eigen,
    Extension,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Reference => "reference selection",
            Stage::Bandwidth => "bandwidth",
            Stage::Affinity => "affinity",
            Stage::Validation => "validation",
            Stage::Densities => "densities",
            Stage::Normalization => "normalization",
            Stage::Gram => "gram",
            Stage::Eigen => "eigendecomposition",
            Stage::Extension => "extension",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A parameter is outside its documented range.
    InvalidArgument(String),
    /// Two inputs disagree on a dimension.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// Every pairwise distance (or the median of them) is zero.
    DegenerateData,
    /// An affinity violates a positivity/finiteness condition.
    Assumption {
        condition: Condition,
        index: usize,
        value: f64,
    },
    /// Non-finite intermediate, or a matrix that should be PSD is not.
    Numerical(String),
    /// Dense `m x m` work refused because `m > max_m`.
    TooLarge { m: usize, max_m: usize },
    /// The model was fit on a user-supplied affinity and cannot evaluate it at new points.
    ExternalAffinity,
    /// New points whose data density underflows against the frozen reference set.
    Underflow { points: Vec<usize> },
    /// An error tagged with the pipeline stage that raised it.
    Stage { stage: Stage, source: Box<Error> },
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::DegenerateData => {
                f.write_str("degenerate data: median squared distance between points and references is zero")
            }
            Error::Assumption {
                condition: Condition::FiniteAffinity,
                index,
                value,
            } => write!(f, "affinity row {index} has a non-finite entry ({value})"),
            Error::Assumption {
                condition: Condition::DataDensity,
                index,
                value,
            } => write!(
                f,
                "data density Omega at row {index} is {value:e}: point is too far from every reference (increase epsilon or enlarge the reference set)"
            ),
            Error::Assumption {
                condition: Condition::ReferenceDensity,
                index,
                value,
            } => write!(
                f,
                "reference density omega at column {index} is {value:e}: reference point sees no data (increase epsilon)"
            ),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::TooLarge { m, max_m } => write!(
                f,
                "refusing dense m x m work for m = {m} > max_m = {max_m}"
            ),
            Error::ExternalAffinity => f.write_str(
                "model was fit on an external affinity matrix; out-of-sample extension is unavailable",
            ),
            Error::Underflow { points } => {
                write!(f, "data density underflows for new points {points:?}")
            }
            Error::Stage { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Stage { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
