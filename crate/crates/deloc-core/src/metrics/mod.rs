//! Empirical distance and bias metrics: exact one-dimensional Wasserstein
//! distances, lower/upper brackets for the max-norm Wasserstein distance,
//! marginal bounds, observable biases with error bars, and max-norm moment
//! checks. All functions are pure; sample sets are immutable matrices.

mod observables;
mod samples;
mod wasserstein;

pub use observables::{
    max_norm_second_moment, observable_bias, MaxNormMoment, ObservableBias, ObservableSpec,
};
pub use samples::{EmpiricalSamples, Provenance};
pub use wasserstein::{
    gaussian_bias_bracket, k_marginal_bound, w2_1d, w2_1d_equalize, w2_linf_lower,
    w2_linf_upper_gaussian, DistanceBracket, GaussianCouplingUpper, MarginalLowerBound,
};

use thiserror::Error;

use crate::potentials::PotentialError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sample counts differ: {a} vs {b}")]
    CountMismatch { a: usize, b: usize },
    #[error("input must be sorted ascending")]
    NotSorted,
    #[error("non-finite sample entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed sample file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}
