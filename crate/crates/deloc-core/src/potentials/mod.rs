//! Target-distribution potentials `V` with gradients, sparse Hessians,
//! certified convexity constants, and interaction graphs.
//!
//! Every family satisfies `alpha * I <= Hessian(x) <= beta * I` at all `x`
//! (spot-checked by the spectral tests) and the Hessian sparsity pattern is
//! contained in the adjacency of [`Potential::graph`].

mod gaussian;
mod lattice;
mod product;
mod rotation;
pub mod scalar;

pub use gaussian::{GaussianPotential, Precision};
pub use lattice::{tridiagonal_example, LambdaSpec, LatticePerturbedPotential};
pub use product::ProductPotential;
pub use rotation::{HouseholderRotation, RotatedMixturePotential};
pub use scalar::{mixture_1d_stats, Mixture1dStats, Scalar1d, ScalarError};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::InteractionGraph;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("non-finite input at coordinate {index}")]
    NonFiniteInput { index: usize },
    #[error("non-finite result")]
    NonFiniteOutput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// A strongly log-concave target potential.
///
/// All methods are pure and safe to call concurrently; implementations hold
/// no mutable state. The `_into` variants are the hot-loop interface (no
/// allocation, no validation); [`Potential::grad`] and
/// [`Potential::hessian_apply`] validate finiteness at the boundary of the
/// API.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    /// Strong-convexity lower bound: `Hessian(x) >= alpha * I` everywhere.
    fn alpha(&self) -> f64;

    /// Smoothness upper bound: `Hessian(x) <= beta * I` everywhere.
    fn beta(&self) -> f64;

    /// Interaction graph containing the Hessian sparsity pattern.
    fn graph(&self) -> &InteractionGraph;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad V(x)` into `out`. Slices must have length `dim()`.
    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `Hessian(x) * v` into `out`.
    fn hessian_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]);

    /// Trace of the Hessian at `x` (the Laplacian of `V`).
    fn laplacian(&self, x: &[f64]) -> f64;

    /// Validating wrapper around [`Potential::grad_into`].
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, PotentialError> {
        check_input(self.dim(), x)?;
        let mut out = vec![0.0; self.dim()];
        self.grad_into(x, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::NonFiniteOutput);
        }
        Ok(out)
    }

    /// Validating wrapper around [`Potential::hessian_apply_into`].
    fn hessian_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, PotentialError> {
        check_input(self.dim(), x)?;
        check_input(self.dim(), v)?;
        let mut out = vec![0.0; self.dim()];
        self.hessian_apply_into(x, v, &mut out);
        if out.iter().any(|t| !t.is_finite()) {
            return Err(PotentialError::NonFiniteOutput);
        }
        Ok(out)
    }

    /// Downcast hook for samplers that have an exact route on Gaussian
    /// targets; everything else reports `None`.
    fn as_gaussian(&self) -> Option<&GaussianPotential> {
        None
    }

    /// Dense Hessian assembled column by column; for diagnostics and the
    /// propagator checks (quadratic in `dim`, keep `dim` moderate).
    fn hessian_dense(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut unit = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            unit[j] = 1.0;
            self.hessian_apply_into(x, &unit, &mut col);
            for i in 0..d {
                m[(i, j)] = col[i];
            }
            unit[j] = 0.0;
        }
        m
    }
}

fn check_input(d: usize, x: &[f64]) -> Result<(), PotentialError> {
    if x.len() != d {
        return Err(PotentialError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    for (index, v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(PotentialError::NonFiniteInput { index });
        }
    }
    Ok(())
}
