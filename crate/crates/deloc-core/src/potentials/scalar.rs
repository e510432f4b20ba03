//! Catalog of one-dimensional convex potentials with analytically known
//! convexity windows.
//!
//! The catalog is closed on purpose: every member exposes exact `alpha`
//! (infimum of the second derivative) and `beta` (supremum), which the
//! multivariate potentials combine into their own certified constants.
//! Arbitrary user closures would make those constants untestable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScalarError {
    #[error("curvature parameter must be positive, got {0}")]
    NonPositiveCurvature(f64),
    #[error("quartic coefficient must be nonnegative, got {0}")]
    NegativeQuartic(f64),
    #[error("mixture weight must lie in (0, 1/2), got {0}")]
    BadMixtureWeight(f64),
    #[error("mixture means must center the distribution: p*mu1 + (1-p)*mu2 = {0:e}")]
    UncenteredMixture(f64),
    #[error("mixture is not log-concave: convexity margin {margin} <= 0")]
    NotLogConcave { margin: f64 },
}

/// Maximum of `phi(t) = (t^4/(1+t^2))''`, attained at `t = +-1`.
///
/// `phi(t) = (12t^2 + 6t^4 + 2t^6)/(1+t^2)^3` is nonnegative and, writing
/// `u = t^2`, has derivative proportional to `12 - 12u`, so the maximum is
/// `phi(1) = 20/8 = 5/2`.
pub const QUARTIC_REG_CURVATURE_MAX: f64 = 2.5;

/// One-dimensional potential from the fixed catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scalar1d {
    /// `a*t^2/2 + b*t`; curvature exactly `a`.
    Quadratic { a: f64, b: f64 },
    /// `a*t^2/2 + c*t^4/(1+t^2)`; curvature in `[a, a + 2.5c]`.
    QuarticReg { a: f64, c: f64 },
    /// Negative log-density of `p*N(mu1,1) + (1-p)*N(mu2,1)`; curvature in
    /// `[margin, 1]` where `margin` is certified on a grid at construction.
    GaussianMixture {
        p: f64,
        mu1: f64,
        mu2: f64,
        /// Grid-certified infimum of the second derivative; stored so that
        /// `alpha()` needs no recomputation.
        margin: f64,
    },
}

impl Scalar1d {
    pub fn quadratic(a: f64, b: f64) -> Result<Self, ScalarError> {
        if !(a > 0.0) {
            return Err(ScalarError::NonPositiveCurvature(a));
        }
        Ok(Self::Quadratic { a, b })
    }

    pub fn quartic_reg(a: f64, c: f64) -> Result<Self, ScalarError> {
        if !(a > 0.0) {
            return Err(ScalarError::NonPositiveCurvature(a));
        }
        if !(c >= 0.0) {
            return Err(ScalarError::NegativeQuartic(c));
        }
        Ok(Self::QuarticReg { a, c })
    }

    /// Builds the mixture member, certifying log-concavity via
    /// [`mixture_1d_stats`]. Fails when the grid margin is nonpositive.
    pub fn gaussian_mixture(p: f64, mu1: f64, mu2: f64) -> Result<Self, ScalarError> {
        let stats = mixture_1d_stats(p, mu1, mu2)?;
        Ok(Self::GaussianMixture {
            p,
            mu1,
            mu2,
            margin: stats.convexity_margin,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Quadratic { a, b } => 0.5 * a * t * t + b * t,
            Self::QuarticReg { a, c } => {
                0.5 * a * t * t + c * t.powi(4) / (1.0 + t * t)
            }
            Self::GaussianMixture { p, mu1, mu2, .. } => {
                let (log_rho, _, _) = mixture_log_density(p, mu1, mu2, t);
                -log_rho
            }
        }
    }

    /// First derivative.
    pub fn d1(&self, t: f64) -> f64 {
        match *self {
            Self::Quadratic { a, b } => a * t + b,
            Self::QuarticReg { a, c } => {
                let t2 = t * t;
                let denom = 1.0 + t2;
                a * t + c * 2.0 * t * t2 * (2.0 + t2) / (denom * denom)
            }
            Self::GaussianMixture { p, mu1, mu2, .. } => {
                // v'(t) = t - E[mu | t] with posterior weights w1, w2.
                let (_, w1, w2) = mixture_log_density(p, mu1, mu2, t);
                t - (w1 * mu1 + w2 * mu2)
            }
        }
    }

    /// Second derivative.
    pub fn d2(&self, t: f64) -> f64 {
        match *self {
            Self::Quadratic { a, .. } => a,
            Self::QuarticReg { a, c } => {
                let t2 = t * t;
                let denom = 1.0 + t2;
                a + c * (12.0 * t2 + 6.0 * t2 * t2 + 2.0 * t2 * t2 * t2)
                    / (denom * denom * denom)
            }
            Self::GaussianMixture { p, mu1, mu2, .. } => {
                // v''(t) = 1 - Var[mu | t] = 1 - w1*w2*(mu1 - mu2)^2.
                let (_, w1, w2) = mixture_log_density(p, mu1, mu2, t);
                let dm = mu1 - mu2;
                1.0 - w1 * w2 * dm * dm
            }
        }
    }

    /// Infimum of the second derivative over the real line (grid-certified
    /// for the mixture, exact for the others).
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Quadratic { a, .. } => a,
            Self::QuarticReg { a, .. } => a,
            Self::GaussianMixture { margin, .. } => margin,
        }
    }

    /// Supremum of the second derivative.
    pub fn beta(&self) -> f64 {
        match *self {
            Self::Quadratic { a, .. } => a,
            Self::QuarticReg { a, c } => a + QUARTIC_REG_CURVATURE_MAX * c,
            Self::GaussianMixture { .. } => 1.0,
        }
    }

    /// True when the scalar law is exactly sampleable (used by product
    /// targets to decide whether a direct sampler exists).
    pub fn exactly_sampleable(&self) -> bool {
        matches!(self, Self::Quadratic { .. } | Self::GaussianMixture { .. })
    }
}

/// Log-density (up to no constant: the full `-log rho` including the
/// Gaussian normalization) and posterior component weights of the
/// two-component mixture at `t`. Evaluated in log space so widely separated
/// components cannot underflow.
fn mixture_log_density(p: f64, mu1: f64, mu2: f64, t: f64) -> (f64, f64, f64) {
    const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
    let l1 = p.ln() - 0.5 * (t - mu1) * (t - mu1);
    let l2 = (1.0 - p).ln() - 0.5 * (t - mu2) * (t - mu2);
    let m = l1.max(l2);
    let e1 = (l1 - m).exp();
    let e2 = (l2 - m).exp();
    let sum = e1 + e2;
    let log_rho = m + sum.ln() - HALF_LOG_2PI;
    (log_rho, e1 / sum, e2 / sum)
}

/// Summary statistics of the centered two-component Gaussian mixture
/// `rho = p*N(mu1, 1) + (1-p)*N(mu2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mixture1dStats {
    /// `p*mu1 + (1-p)*mu2`; zero by the centering precondition.
    pub mean: f64,
    pub variance: f64,
    /// `min v''` of the negative log-density over a grid on `[-10, 10]`
    /// with 10^4 points. Positive iff the mixture is (certifiably)
    /// log-concave.
    pub convexity_margin: f64,
}

/// Validates mixture parameters and certifies log-concavity of the negative
/// log-density by grid search.
///
/// Outside `[-10, 10]` one component dominates completely for every
/// parameter choice that passes the grid check, and `v''` tends to 1, so
/// the grid minimum is the global infimum for practical purposes.
pub fn mixture_1d_stats(p: f64, mu1: f64, mu2: f64) -> Result<Mixture1dStats, ScalarError> {
    if !(p > 0.0 && p < 0.5) {
        return Err(ScalarError::BadMixtureWeight(p));
    }
    let mean = p * mu1 + (1.0 - p) * mu2;
    if mean.abs() > 1e-9 {
        return Err(ScalarError::UncenteredMixture(mean));
    }
    let variance = p * (1.0 + mu1 * mu1) + (1.0 - p) * (1.0 + mu2 * mu2) - mean * mean;
    let scalar = Scalar1d::GaussianMixture {
        p,
        mu1,
        mu2,
        margin: f64::NAN, // not consulted by d2
    };
    const GRID_POINTS: usize = 10_000;
    let mut margin = f64::INFINITY;
    for i in 0..GRID_POINTS {
        let t = -10.0 + 20.0 * (i as f64) / ((GRID_POINTS - 1) as f64);
        margin = margin.min(scalar.d2(t));
    }
    if !(margin > 0.0) {
        return Err(ScalarError::NotLogConcave { margin });
    }
    Ok(Mixture1dStats {
        mean,
        variance,
        convexity_margin: margin,
    })
}
