//! Observable catalog (linear and quadratic coordinate functions) and the
//! bias of their means between a reference sample set and a chain sample
//! set, plus the max-norm second moment used by the sub-Gaussian checks.

use serde::{Deserialize, Serialize};

use crate::stats::BatchAccumulator;

use super::samples::EmpiricalSamples;
use super::MetricsError;

/// Observables with closed-form Laplacians: linear combinations,
/// quadratic monomial combinations, and short coordinate sums.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// `sum c_i x_i` over the listed `(coordinate, coefficient)` pairs.
    Linear { terms: Vec<(usize, f64)> },
    /// `sum c x_i x_j` over the listed `(i, j, coefficient)` triples.
    Quadratic { terms: Vec<(usize, usize, f64)> },
    /// `x_1 + ... + x_K`: the first `k` coordinates summed.
    CoordinateSum { k: usize },
}

impl ObservableSpec {
    /// Single coordinate `x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::Linear {
            terms: vec![(i, 1.0)],
        }
    }

    /// Squared coordinate `x_i^2`.
    pub fn coordinate_squared(i: usize) -> Self {
        Self::Quadratic {
            terms: vec![(i, i, 1.0)],
        }
    }

    /// Smallest dimension the observable is defined on.
    pub fn min_dim(&self) -> usize {
        match self {
            Self::Linear { terms } => terms.iter().map(|&(i, _)| i + 1).max().unwrap_or(0),
            Self::Quadratic { terms } => terms
                .iter()
                .map(|&(i, j, _)| i.max(j) + 1)
                .max()
                .unwrap_or(0),
            Self::CoordinateSum { k } => *k,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { terms } => terms.iter().map(|&(i, c)| c * x[i]).sum(),
            Self::Quadratic { terms } => terms.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum(),
            Self::CoordinateSum { k } => x[..*k].iter().sum(),
        }
    }

    /// Laplacian of the observable (constant for this catalog): diagonal
    /// quadratic terms contribute `2c`, everything else vanishes.
    pub fn laplacian(&self) -> f64 {
        match self {
            Self::Linear { .. } | Self::CoordinateSum { .. } => 0.0,
            Self::Quadratic { terms } => terms
                .iter()
                .map(|&(i, j, c)| if i == j { 2.0 * c } else { 0.0 })
                .sum(),
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), MetricsError> {
        let needed = self.min_dim();
        if needed > d {
            return Err(MetricsError::DimensionMismatch(format!(
                "observable needs dimension >= {needed}, samples have {d}"
            )));
        }
        if needed == 0 {
            return Err(MetricsError::InvalidParameter(
                "observable has no terms".into(),
            ));
        }
        Ok(())
    }
}

/// Difference of observable means between a reference set and a chain set.
#[derive(Debug, Clone, Copy)]
pub struct ObservableBias {
    /// `mean_f(reference) - mean_f(chain)`.
    pub estimate: f64,
    /// Batch-means error bars of both sides combined in quadrature.
    pub stderr: f64,
    pub mean_reference: f64,
    pub stderr_reference: f64,
    pub mean_chain: f64,
    pub stderr_chain: f64,
}

/// Evaluates the observable on both sample sets and reports the bias of
/// the means. Rows are taken in stored order for batch means, so chain
/// output must stay time-ordered.
pub fn observable_bias(
    f: &ObservableSpec,
    reference: &EmpiricalSamples,
    chain: &EmpiricalSamples,
) -> Result<ObservableBias, MetricsError> {
    if reference.d() != chain.d() {
        return Err(MetricsError::DimensionMismatch(format!(
            "sample dimensions differ: {} vs {}",
            reference.d(),
            chain.d()
        )));
    }
    f.check_dim(reference.d())?;
    let side = |s: &EmpiricalSamples| {
        let mut acc = BatchAccumulator::new(s.n(), 32);
        for row in s.rows() {
            acc.push(f.eval(row));
        }
        (acc.overall_mean(), acc.stderr())
    };
    let (mean_reference, stderr_reference) = side(reference);
    let (mean_chain, stderr_chain) = side(chain);
    Ok(ObservableBias {
        estimate: mean_reference - mean_chain,
        stderr: (stderr_reference * stderr_reference + stderr_chain * stderr_chain).sqrt(),
        mean_reference,
        stderr_reference,
        mean_chain,
        stderr_chain,
    })
}

/// Empirical `E |row|_inf^2` with its error bar.
#[derive(Debug, Clone, Copy)]
pub struct MaxNormMoment {
    pub value: f64,
    pub stderr: f64,
}

/// Mean squared max-norm of the rows. Callers verifying sub-Gaussian
/// bounds should pass centered samples (see
/// [`EmpiricalSamples::centered`]).
pub fn max_norm_second_moment(samples: &EmpiricalSamples) -> MaxNormMoment {
    let mut acc = BatchAccumulator::new(samples.n(), 32);
    for row in samples.rows() {
        let m = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        acc.push(m * m);
    }
    MaxNormMoment {
        value: acc.overall_mean(),
        stderr: acc.stderr(),
    }
}
