//! Metropolis-adjusted Langevin chain: the unadjusted proposal corrected
//! by an accept/reject step, giving an asymptotically unbiased reference
//! sampler for non-Gaussian targets.

use rand::Rng;

use crate::potentials::Potential;

use super::rng::{chain_rng, fill_standard_normal};
use super::ula::{check_state, initial_state, max_abs_checked, step_in_place};
use super::{ChainRun, Init, MomentAccumulator, RunOptions, SamplerError, StepConfig, ThinnedTrajectory};

/// Runs Metropolis-adjusted chains. The proposal from `x` is the
/// unadjusted step `x - h grad V(x) + sqrt(2h) z`; acceptance uses the
/// standard ratio with the Gaussian proposal density. The acceptance rate
/// is reported and a sub-1% rate is surfaced as a warning.
pub fn mala_chain(
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
    let mut accepted = 0usize;
    let sqrt2h = (2.0 * cfg.h).sqrt();

    let mut z = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for chain in 0..cfg.n_chains {
        let mut rng = chain_rng(cfg.seed, chain as u64);
        let mut x = initial_state(init, d, &mut rng)?;
        check_state(&x, chain, 0)?;
        let mut g = p.grad(&x)?;
        let mut vx = p.value(&x);
        for step in 0..cfg.n_steps {
            fill_standard_normal(&mut rng, &mut z);
            y.copy_from_slice(&x);
            step_in_place(&mut y, &g, cfg.h, sqrt2h, &z);
            check_state(&y, chain, step + 1)?;
            p.grad_into(&y, &mut gy);
            if let Some(m) = max_abs_checked(&gy) {
                if m > max_grad_inf {
                    max_grad_inf = m;
                }
            }
            let vy = p.value(&y);
            // forward kernel term reduces exactly to |z|^2 / 2 because the
            // proposal is y = x - h g + sqrt(2h) z
            let z_sq: f64 = z.iter().map(|v| v * v).sum();
            let mut back_sq = 0.0;
            for i in 0..d {
                let r = x[i] - y[i] + cfg.h * gy[i];
                back_sq += r * r;
            }
            let log_ratio = (vx - vy) + 0.5 * z_sq - back_sq / (4.0 * cfg.h);
            let u: f64 = rng.gen();
            if u.ln() < log_ratio {
                x.copy_from_slice(&y);
                g.copy_from_slice(&gy);
                vx = vy;
                accepted += 1;
            }
            if step >= cfg.burn_in {
                moments.push(&x);
                if thin_every > 0 && (step - cfg.burn_in) % thin_every == 0 {
                    thinned_data.extend_from_slice(&x);
                }
            }
        }
        final_states.push(x.clone());
    }

    let rate = accepted as f64 / (cfg.n_steps * cfg.n_chains) as f64;
    let mut warnings = Vec::new();
    if rate < 0.01 {
        warnings.push(format!(
            "acceptance rate {rate:.4} below 1%: step too large for reference use"
        ));
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
        acceptance_rate: Some(rate),
        warnings,
    })
}
