//! Samplers: the unadjusted Langevin iteration, exact Gaussian and product
//! samplers, a Metropolis-adjusted reference chain, and synchronous
//! couplings between a coarse chain and a stationary reference.
//!
//! All runs are deterministic given `(config, seed)`: every chain owns a
//! stream of a counter-based generator keyed by `(seed, chain_id)` and
//! chains are stepped in index order.

mod coupled;
mod exact;
mod mala;
mod rng;
mod ula;

pub use coupled::{
    coupled_bias_run, CoupledInit, CoupledOptions, CoupledRun, CouplingReference,
};
pub use exact::{exact_gaussian_biased, GaussianSampler, ProductSampler, RotatedSampler};
pub use mala::mala_chain;
pub use rng::{chain_rng, fill_standard_normal};
pub use ula::{run_chain, ula_step};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::PotentialError;
use crate::stats;

/// States with max-norm beyond this abort the run: under `h <= 1/beta` the
/// iteration is contractive, so crossing it means misconfiguration.
pub const DIVERGENCE_THRESHOLD: f64 = 1e10;

/// Batch count for batch-means error bars.
pub const N_BATCHES: usize = 32;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("chain {chain} diverged at step {step}: |x|_inf = {max_abs:.3e}")]
    Diverged {
        chain: usize,
        step: usize,
        max_abs: f64,
    },
    #[error("reference incompatible with target: {0}")]
    ReferenceMismatch(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Run geometry shared by every sampler.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepConfig {
    /// Step size, in the time units of the diffusion.
    pub h: f64,
    /// Total iterations per chain, burn-in included.
    pub n_steps: usize,
    /// Discarded iterations per chain.
    pub burn_in: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl StepConfig {
    pub fn new(h: f64, n_steps: usize, burn_in: usize, seed: u64, n_chains: usize) -> Self {
        Self {
            h,
            n_steps,
            burn_in,
            seed,
            n_chains,
        }
    }

    /// Burn-in long enough that the contraction factor `q = exp(-h alpha)`
    /// satisfies `q^burn_in <= e^{-10}`, floored at 10^4 steps.
    pub fn default_burn_in(alpha: f64, h: f64) -> usize {
        ((10.0 / (alpha * h)).ceil() as usize).max(10_000)
    }

    /// Checks the standing assumptions: `0 < h <= 1/beta`, at least one
    /// retained step, at least one chain.
    pub fn validate(&self, beta: f64) -> Result<(), SamplerError> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(SamplerError::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.h
            )));
        }
        if self.h > 1.0 / beta {
            return Err(SamplerError::InvalidConfig(format!(
                "step size {} exceeds 1/beta = {}",
                self.h,
                1.0 / beta
            )));
        }
        if self.burn_in >= self.n_steps {
            return Err(SamplerError::InvalidConfig(format!(
                "burn_in {} leaves no retained steps out of {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.n_chains == 0 {
            return Err(SamplerError::InvalidConfig("n_chains must be >= 1".into()));
        }
        Ok(())
    }
}

/// Exact sampler for a target state distribution.
pub trait StateSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, rng: &mut rand_chacha::ChaCha12Rng, out: &mut [f64]);

    fn sample(&self, rng: &mut rand_chacha::ChaCha12Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Chain initialization.
pub enum Init<'a> {
    /// Every chain starts at this point.
    Point(Vec<f64>),
    /// Each chain starts at an independent draw from the sampler.
    Sample(&'a dyn StateSampler),
}

/// Optional extras for [`run_chain`] and [`mala_chain`].
#[derive(Default)]
pub struct RunOptions {
    /// Keep every `thin`-th post-burn-in state in the returned trajectory.
    pub thin: Option<usize>,
    /// Accumulate the full empirical covariance (quadratic in `d`; intended
    /// for small dimensions).
    pub track_covariance: bool,
}

/// Thinned post-burn-in states, row-major, chains concatenated in order.
#[derive(Debug, Clone)]
pub struct ThinnedTrajectory {
    pub every: usize,
    pub dim: usize,
    pub n_rows: usize,
    pub data: Vec<f64>,
}

impl ThinnedTrajectory {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.data[r * self.dim + j]).collect()
    }
}

/// Per-coordinate streaming moments with batch-means error bars.
///
/// Values are pushed in generation order (chain 0 first); batches are
/// contiguous blocks of that stream, long enough to decorrelate.
#[derive(Debug, Clone)]
pub(crate) struct MomentAccumulator {
    dim: usize,
    batch_len: usize,
    n_batches: usize,
    /// `sum_x[b * dim + i]`: batch `b`, coordinate `i`.
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    batch_counts: Vec<usize>,
    seen: usize,
    /// Covariance upper triangle sums, row-major `d x d`, when tracked.
    cov_sums: Option<Vec<f64>>,
}

impl MomentAccumulator {
    pub(crate) fn new(dim: usize, total: usize, track_covariance: bool) -> Self {
        let n_batches = N_BATCHES.min(total.max(1));
        Self {
            dim,
            batch_len: (total / n_batches).max(1),
            n_batches,
            sum_x: vec![0.0; n_batches * dim],
            sum_xx: vec![0.0; n_batches * dim],
            batch_counts: vec![0; n_batches],
            seen: 0,
            cov_sums: track_covariance.then(|| vec![0.0; dim * dim]),
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        let b = (self.seen / self.batch_len).min(self.n_batches - 1);
        let row = &mut self.sum_x[b * self.dim..(b + 1) * self.dim];
        for (s, &v) in row.iter_mut().zip(x) {
            *s += v;
        }
        let row = &mut self.sum_xx[b * self.dim..(b + 1) * self.dim];
        for (s, &v) in row.iter_mut().zip(x) {
            *s += v * v;
        }
        if let Some(cov) = &mut self.cov_sums {
            for i in 0..self.dim {
                let xi = x[i];
                let base = i * self.dim;
                for (j, &xj) in x.iter().enumerate().skip(i) {
                    cov[base + j] += xi * xj;
                }
            }
        }
        self.batch_counts[b] += 1;
        self.seen += 1;
    }

    pub(crate) fn count(&self) -> usize {
        self.seen
    }

    fn coord_batch_means(&self, sums: &[f64], i: usize) -> Vec<f64> {
        (0..self.n_batches)
            .filter(|&b| self.batch_counts[b] > 0)
            .map(|b| sums[b * self.dim + i] / self.batch_counts[b] as f64)
            .collect()
    }

    pub(crate) fn mean(&self, i: usize) -> f64 {
        let total: f64 = (0..self.n_batches).map(|b| self.sum_x[b * self.dim + i]).sum();
        total / self.seen as f64
    }

    pub(crate) fn second_moment(&self, i: usize) -> f64 {
        let total: f64 = (0..self.n_batches).map(|b| self.sum_xx[b * self.dim + i]).sum();
        total / self.seen as f64
    }

    pub(crate) fn mean_stderr(&self, i: usize) -> f64 {
        stats::stderr_from_batch_means(&self.coord_batch_means(&self.sum_x, i))
    }

    /// Batch-means error bar for `Var = E[x^2] - mean^2`: per batch, the
    /// mean of `(x - mu)^2` linearized around the global mean `mu`.
    pub(crate) fn variance_stderr(&self, i: usize) -> f64 {
        let mu = self.mean(i);
        let m1 = self.coord_batch_means(&self.sum_x, i);
        let m2 = self.coord_batch_means(&self.sum_xx, i);
        let per_batch: Vec<f64> = m1
            .iter()
            .zip(&m2)
            .map(|(b1, b2)| b2 - 2.0 * mu * b1 + mu * mu)
            .collect();
        stats::stderr_from_batch_means(&per_batch)
    }

    pub(crate) fn covariance(&self) -> Option<Vec<f64>> {
        let cov = self.cov_sums.as_ref()?;
        let n = self.seen as f64;
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            let mi = self.mean(i);
            for j in i..self.dim {
                let v = cov[i * self.dim + j] / n - mi * self.mean(j);
                out[i * self.dim + j] = v;
                out[j * self.dim + i] = v;
            }
        }
        Some(out)
    }
}

/// Output of a chain run: final states, streaming moments, diagnostics.
pub struct ChainRun {
    pub config: StepConfig,
    pub dim: usize,
    /// One final state per chain.
    pub final_states: Vec<Vec<f64>>,
    pub(crate) moments: MomentAccumulator,
    /// Largest gradient max-norm seen across all steps.
    pub max_grad_inf: f64,
    pub thinned: Option<ThinnedTrajectory>,
    /// Metropolis acceptance rate; `None` for unadjusted runs.
    pub acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl ChainRun {
    /// Retained samples across chains; always `(n_steps - burn_in) * n_chains`.
    pub fn n_samples(&self) -> usize {
        self.moments.count()
    }

    pub fn coord_mean(&self, i: usize) -> f64 {
        self.moments.mean(i)
    }

    pub fn coord_mean_stderr(&self, i: usize) -> f64 {
        self.moments.mean_stderr(i)
    }

    pub fn coord_second_moment(&self, i: usize) -> f64 {
        self.moments.second_moment(i)
    }

    pub fn coord_variance(&self, i: usize) -> f64 {
        let m = self.moments.mean(i);
        self.moments.second_moment(i) - m * m
    }

    pub fn coord_variance_stderr(&self, i: usize) -> f64 {
        self.moments.variance_stderr(i)
    }

    /// Empirical covariance (row-major `d x d`) when tracking was enabled.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        self.moments.covariance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_burn_in_floors_at_ten_thousand() {
        assert_eq!(StepConfig::default_burn_in(1.0, 0.1), 10_000);
        // 10 / (0.5 * 1e-3) = 20000 exceeds the floor
        assert_eq!(StepConfig::default_burn_in(0.5, 1e-3), 20_000);
    }

    #[test]
    fn validate_enforces_step_window() {
        let mut cfg = StepConfig::new(0.5, 100, 10, 0, 1);
        assert!(cfg.validate(1.0).is_ok());
        assert!(cfg.validate(3.0).is_err()); // h > 1/beta
        cfg.h = 0.0;
        assert!(cfg.validate(1.0).is_err());
        cfg.h = 0.1;
        cfg.burn_in = 100;
        assert!(cfg.validate(1.0).is_err()); // nothing retained
        cfg.burn_in = 10;
        cfg.n_chains = 0;
        assert!(cfg.validate(1.0).is_err());
    }

    #[test]
    fn moment_accumulator_matches_direct_sums() {
        let xs = [
            [1.0, -2.0],
            [0.5, 0.0],
            [-1.5, 3.0],
            [2.0, 1.0],
        ];
        let mut acc = MomentAccumulator::new(2, xs.len(), true);
        for x in &xs {
            acc.push(x);
        }
        assert_eq!(acc.count(), 4);
        assert!((acc.mean(0) - 0.5).abs() < 1e-15);
        assert!((acc.mean(1) - 0.5).abs() < 1e-15);
        let second: f64 = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / 4.0;
        assert!((acc.second_moment(0) - second).abs() < 1e-15);
        // covariance against the direct formula
        let cov = acc.covariance().unwrap();
        let direct: f64 = xs.iter().map(|x| x[0] * x[1]).sum::<f64>() / 4.0 - 0.25;
        assert!((cov[1] - direct).abs() < 1e-15);
        assert_eq!(cov[1], cov[2]);
    }

    #[test]
    fn thinned_trajectory_indexing() {
        let t = ThinnedTrajectory {
            every: 2,
            dim: 3,
            n_rows: 2,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(t.column(2), vec![3.0, 6.0]);
    }
}
