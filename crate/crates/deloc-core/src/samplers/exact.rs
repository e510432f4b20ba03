//! Exact samplers: Gaussian targets, the Gaussian ULA-stationary law, and
//! product / rotated-product laws with mixture coordinates.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::potentials::scalar::Scalar1d;
use crate::potentials::{
    GaussianPotential, HouseholderRotation, PotentialError, ProductPotential,
    RotatedMixturePotential,
};

use super::rng::fill_standard_normal;
use super::{SamplerError, StateSampler};

/// Exact sampler for a Gaussian law given in the precision eigenbasis:
/// draws `mean + U diag(scales) Z` with `Z` standard normal.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    /// Per-eigencoordinate standard deviations.
    scales: Vec<f64>,
    /// Eigenvector application is delegated to a cloned potential so dense
    /// and diagonal precisions share one code path.
    basis: GaussianPotential,
}

impl GaussianSampler {
    /// Sampler for the target `N(m, Sigma)` itself.
    pub fn target(p: &GaussianPotential) -> Self {
        Self {
            mean: p.mean().to_vec(),
            scales: p.sigma_sqrt_eigvals(),
            basis: p.clone(),
        }
    }

    /// Sampler for the ULA-stationary law `N(m, Sigma_inf(h))`.
    pub fn biased(p: &GaussianPotential, h: f64) -> Result<Self, PotentialError> {
        Ok(Self {
            mean: p.mean().to_vec(),
            scales: p.sigma_inf_sqrt_eigvals(h)?,
            basis: p.clone(),
        })
    }
}

impl StateSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_into(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        fill_standard_normal(rng, &mut z);
        for (zi, s) in z.iter_mut().zip(&self.scales) {
            *zi *= s;
        }
        self.basis.eigvecs_apply(&z, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }
}

/// Exact sampler for the biased stationary law of the unadjusted chain on
/// a Gaussian target at step `h`.
pub fn exact_gaussian_biased(
    p: &GaussianPotential,
    h: f64,
) -> Result<GaussianSampler, SamplerError> {
    GaussianSampler::biased(p, h).map_err(SamplerError::from)
}

/// Exact sampler for product targets whose components all admit exact
/// draws (quadratics and two-component normal mixtures).
#[derive(Debug, Clone)]
pub struct ProductSampler {
    components: Vec<Scalar1d>,
}

impl ProductSampler {
    pub fn new(p: &ProductPotential) -> Result<Self, SamplerError> {
        if !p.exactly_sampleable() {
            return Err(SamplerError::ReferenceMismatch(
                "product potential has a component without an exact sampler".into(),
            ));
        }
        Ok(Self {
            components: p.components().to_vec(),
        })
    }
}

impl StateSampler for ProductSampler {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn sample_into(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = match *c {
                // exp(-(a t^2 / 2 + b t)) is N(-b/a, 1/a)
                Scalar1d::Quadratic { a, b } => {
                    let z: f64 = StandardNormal.sample(rng);
                    -b / a + z / a.sqrt()
                }
                Scalar1d::GaussianMixture { p, mu1, mu2, .. } => {
                    let u: f64 = rng.gen();
                    let mu = if u < p { mu1 } else { mu2 };
                    let z: f64 = StandardNormal.sample(rng);
                    mu + z
                }
                Scalar1d::QuarticReg { .. } => {
                    unreachable!("constructor rejects non-sampleable components")
                }
            };
        }
    }
}

/// Pushforward of a product law under the Householder rotation: the exact
/// target sampler of the rotated mixture potential.
#[derive(Debug, Clone)]
pub struct RotatedSampler {
    inner: ProductSampler,
    rotation: HouseholderRotation,
}

impl RotatedSampler {
    pub fn new(p: &RotatedMixturePotential) -> Result<Self, SamplerError> {
        Ok(Self {
            inner: ProductSampler::new(p.base())?,
            rotation: p.rotation().clone(),
        })
    }
}

impl StateSampler for RotatedSampler {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample_into(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        self.inner.sample_into(rng, out);
        self.rotation.apply_in_place(out);
    }
}
