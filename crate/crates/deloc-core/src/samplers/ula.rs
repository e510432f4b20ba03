//! The unadjusted Langevin iteration `x' = x - h grad V(x) + sqrt(2h) xi`
//! and full chain runs with streaming moment accumulation.

use crate::potentials::Potential;

use super::rng::{chain_rng, fill_standard_normal};
use super::{
    ChainRun, Init, MomentAccumulator, RunOptions, SamplerError, StepConfig, ThinnedTrajectory,
    DIVERGENCE_THRESHOLD,
};

/// One unadjusted step; the validating entry point for single-step use.
/// `noise` must hold i.i.d. standard normals.
pub fn ula_step(
    p: &dyn Potential,
    x: &[f64],
    h: f64,
    noise: &[f64],
) -> Result<Vec<f64>, SamplerError> {
    if !(h > 0.0) || h > 1.0 / p.beta() {
        return Err(SamplerError::InvalidConfig(format!(
            "step size {h} outside (0, 1/beta = {}]",
            1.0 / p.beta()
        )));
    }
    if noise.len() != p.dim() {
        return Err(SamplerError::InvalidConfig(format!(
            "noise length {} does not match dimension {}",
            noise.len(),
            p.dim()
        )));
    }
    let g = p.grad(x)?;
    let sqrt2h = (2.0 * h).sqrt();
    let mut out = x.to_vec();
    step_in_place(&mut out, &g, h, sqrt2h, noise);
    match max_abs_checked(&out) {
        Some(m) if m <= DIVERGENCE_THRESHOLD => Ok(out),
        other => Err(SamplerError::Diverged {
            chain: 0,
            step: 0,
            max_abs: other.unwrap_or(f64::NAN),
        }),
    }
}

/// `x <- x - h g + sqrt(2h) z`, no checks; the hot loop shared by every
/// unadjusted run.
pub(crate) fn step_in_place(x: &mut [f64], g: &[f64], h: f64, sqrt2h: f64, z: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i] - h * g[i] + sqrt2h * z[i];
    }
}

/// Max-norm of `x`, or `None` if any entry is non-finite.
pub(crate) fn max_abs_checked(x: &[f64]) -> Option<f64> {
    let mut m = 0.0f64;
    for &v in x {
        if !v.is_finite() {
            return None;
        }
        let a = v.abs();
        if a > m {
            m = a;
        }
    }
    Some(m)
}

pub(crate) fn check_state(
    x: &[f64],
    chain: usize,
    step: usize,
) -> Result<f64, SamplerError> {
    match max_abs_checked(x) {
        Some(m) if m <= DIVERGENCE_THRESHOLD => Ok(m),
        other => Err(SamplerError::Diverged {
            chain,
            step,
            max_abs: other.unwrap_or(f64::NAN),
        }),
    }
}

pub(crate) fn initial_state(
    init: &Init,
    dim: usize,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<Vec<f64>, SamplerError> {
    match init {
        Init::Point(x0) => {
            if x0.len() != dim {
                return Err(SamplerError::InvalidConfig(format!(
                    "init point has length {}, expected {dim}",
                    x0.len()
                )));
            }
            Ok(x0.clone())
        }
        Init::Sample(sampler) => {
            if sampler.dim() != dim {
                return Err(SamplerError::InvalidConfig(format!(
                    "init sampler dimension {} does not match {dim}",
                    sampler.dim()
                )));
            }
            let mut out = vec![0.0; dim];
            sampler.sample_into(rng, &mut out);
            Ok(out)
        }
    }
}

/// Runs `cfg.n_chains` unadjusted chains and accumulates post-burn-in
/// moments. Deterministic given `(cfg, init)`.
pub fn run_chain(
    p: &dyn Potential,
    cfg: &StepConfig,
    init: &Init,
    opts: &RunOptions,
) -> Result<ChainRun, SamplerError> {
    cfg.validate(p.beta())?;
    let d = p.dim();
    let retained = cfg.n_steps - cfg.burn_in;
    let mut moments = MomentAccumulator::new(d, retained * cfg.n_chains, opts.track_covariance);
    let thin_every = opts.thin.unwrap_or(0);
    let mut thinned_data = Vec::new();
    let mut max_grad_inf = 0.0f64;
    let mut final_states = Vec::with_capacity(cfg.n_chains);
    let sqrt2h = (2.0 * cfg.h).sqrt();

    let mut g = vec![0.0; d];
    let mut z = vec![0.0; d];
    for chain in 0..cfg.n_chains {
        let mut rng = chain_rng(cfg.seed, chain as u64);
        let mut x = initial_state(init, d, &mut rng)?;
        check_state(&x, chain, 0)?;
        for step in 0..cfg.n_steps {
            p.grad_into(&x, &mut g);
            if let Some(m) = max_abs_checked(&g) {
                if m > max_grad_inf {
                    max_grad_inf = m;
                }
            }
            fill_standard_normal(&mut rng, &mut z);
            step_in_place(&mut x, &g, cfg.h, sqrt2h, &z);
            check_state(&x, chain, step + 1)?;
            if step >= cfg.burn_in {
                moments.push(&x);
                if thin_every > 0 && (step - cfg.burn_in) % thin_every == 0 {
                    thinned_data.extend_from_slice(&x);
                }
            }
        }
        final_states.push(x.clone());
    }

    let thinned = (thin_every > 0).then(|| {
        let n_rows = thinned_data.len() / d;
        ThinnedTrajectory {
            every: thin_every,
            dim: d,
            n_rows,
            data: thinned_data,
        }
    });
    Ok(ChainRun {
        config: cfg.clone(),
        dim: d,
        final_states,
        moments,
        max_grad_inf,
        thinned,
        acceptance_rate: None,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::GaussianPotential;
    use crate::samplers::exact::exact_gaussian_biased;

    #[test]
    fn zero_noise_zero_gradient_is_fixed_point() {
        let p = GaussianPotential::standard(3);
        let x = vec![0.0; 3];
        let out = ula_step(&p, &x, 0.5, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn one_dimensional_contraction_without_noise() {
        let p = GaussianPotential::standard(1);
        let out = ula_step(&p, &[2.0], 0.1, &[0.0]).unwrap();
        assert!((out[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_oversized_h_and_bad_noise() {
        let p = GaussianPotential::scaled_identity(2, 4.0).unwrap();
        assert!(ula_step(&p, &[0.0, 0.0], 0.3, &[0.0, 0.0]).is_err()); // 1/beta = 0.25
        assert!(ula_step(&p, &[0.0, 0.0], 0.2, &[0.0]).is_err());
    }

    #[test]
    fn long_run_variance_matches_biased_fixed_point() {
        // d = 2 identity precision, h = 0.1: variance -> 1/0.95
        let p = GaussianPotential::standard(2);
        let cfg = StepConfig::new(0.1, 1_060_000, 60_000, 12, 1);
        let run = run_chain(&p, &cfg, &Init::Point(vec![0.0; 2]), &RunOptions::default()).unwrap();
        assert_eq!(run.n_samples(), 1_000_000);
        let expect = 1.0 / 0.95;
        for i in 0..2 {
            let v = run.coord_variance(i);
            let se = run.coord_variance_stderr(i);
            assert!(
                (v - expect).abs() < 3.0 * se,
                "coord {i}: {v} vs {expect} (se {se})"
            );
            assert!(se < 0.02, "error bar suspiciously large: {se}");
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let p = GaussianPotential::standard(2);
        let cfg = StepConfig::new(0.1, 2_000, 500, 77, 2);
        let opts = RunOptions {
            thin: Some(10),
            track_covariance: true,
        };
        let a = run_chain(&p, &cfg, &Init::Point(vec![1.0, -1.0]), &opts).unwrap();
        let b = run_chain(&p, &cfg, &Init::Point(vec![1.0, -1.0]), &opts).unwrap();
        assert_eq!(a.final_states, b.final_states);
        assert_eq!(a.coord_mean(0), b.coord_mean(0));
        assert_eq!(
            a.thinned.as_ref().unwrap().data,
            b.thinned.as_ref().unwrap().data
        );
        assert_eq!(a.covariance().unwrap(), b.covariance().unwrap());
    }

    #[test]
    fn empty_retention_rejected() {
        let p = GaussianPotential::standard(1);
        let cfg = StepConfig::new(0.1, 100, 100, 0, 1);
        assert!(run_chain(&p, &cfg, &Init::Point(vec![0.0]), &RunOptions::default()).is_err());
    }

    #[test]
    fn stationary_init_from_exact_biased_sampler() {
        // starting at pi_h, the chain is stationary from step one; even a
        // short run should sit near the biased variance
        let p = GaussianPotential::standard(1);
        let sampler = exact_gaussian_biased(&p, 0.1).unwrap();
        let cfg = StepConfig::new(0.1, 3_000, 10, 31, 64);
        let run = run_chain(&p, &cfg, &Init::Sample(&sampler), &RunOptions::default()).unwrap();
        let v = run.coord_variance(0);
        assert!((v - 1.0 / 0.95).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn accumulator_count_contract() {
        let p = GaussianPotential::standard(2);
        let cfg = StepConfig::new(0.2, 500, 100, 3, 3);
        let run = run_chain(&p, &cfg, &Init::Point(vec![0.0; 2]), &RunOptions::default()).unwrap();
        assert_eq!(run.n_samples(), 400 * 3);
        assert_eq!(run.final_states.len(), 3);
        assert!(run.max_grad_inf > 0.0);
    }

    #[test]
    fn thinning_row_count() {
        let p = GaussianPotential::standard(1);
        let cfg = StepConfig::new(0.1, 1_000, 500, 3, 2);
        let opts = RunOptions {
            thin: Some(100),
            track_covariance: false,
        };
        let run = run_chain(&p, &cfg, &Init::Point(vec![0.0]), &opts).unwrap();
        // per chain: steps 500, 600, ..., 900 -> 5 rows
        assert_eq!(run.thinned.unwrap().n_rows, 10);
    }
}
