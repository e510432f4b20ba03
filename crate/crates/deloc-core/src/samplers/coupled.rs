//! Synchronous couplings between the coarse unadjusted chain and a
//! stationary reference driven by the same Brownian path. The averaged
//! gap moments upper-bound the corresponding Wasserstein distances
//! between the biased stationary law and the target.

use std::f64::consts::SQRT_2;

use crate::potentials::{GaussianPotential, Potential};
use crate::stats::{sqrt_with_stderr, BatchAccumulator};

use super::rng::{chain_rng, fill_standard_normal};
use super::ula::{check_state, step_in_place};
use super::{SamplerError, StateSampler, StepConfig, ThinnedTrajectory, N_BATCHES};

/// Stationary reference coupled to the coarse chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingReference {
    /// Exact Ornstein-Uhlenbeck transition in the precision eigenbasis;
    /// Gaussian targets only. The coarse Gaussian increment is the shared
    /// Brownian endpoint, completed by an independent bridge component.
    ExactGaussian,
    /// Unadjusted chain at step `h / substeps`, consuming the same fine
    /// Gaussian increments whose sum forms the coarse increment. Use
    /// `substeps >= 50` for reference-quality runs; smaller values only
    /// exercise the coupling plumbing.
    FineUla { substeps: usize },
}

impl CouplingReference {
    fn label(&self) -> String {
        match self {
            Self::ExactGaussian => "exact_gaussian".to_string(),
            Self::FineUla { substeps } => format!("fine_ula({substeps})"),
        }
    }
}

/// Joint initialization of the coupled pair.
pub enum CoupledInit<'a> {
    /// Gaussian only: one shared standard normal vector scaled to the
    /// biased law on the coarse side and the target on the reference side,
    /// so both chains are marginally stationary from step zero.
    StationaryPair,
    /// Both chains start at the same draw from the sampler.
    SharedSample(&'a dyn StateSampler),
    /// Both chains start at this point.
    SharedPoint(Vec<f64>),
}

pub struct CoupledOptions<'a> {
    pub init: CoupledInit<'a>,
    /// Evaluate the gap every `gap_stride`-th post-burn-in step (rotating
    /// back to original coordinates costs a matrix apply on dense
    /// Gaussians, so striding keeps long runs cheap).
    pub gap_stride: usize,
    /// Keep every `thin`-th evaluated pair of states.
    pub thin: Option<usize>,
}

impl Default for CoupledOptions<'static> {
    fn default() -> Self {
        Self {
            init: CoupledInit::StationaryPair,
            gap_stride: 1,
            thin: None,
        }
    }
}

/// Gap moments of a coupled run, with batch-means error bars.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub config: StepConfig,
    pub dim: usize,
    pub reference: String,
    /// `E |X - Y|_inf^2` over evaluated steps.
    pub gap_inf_sq: f64,
    /// `sqrt(E |X - Y|_inf^2)`.
    pub gap_inf: f64,
    pub gap_inf_stderr: f64,
    pub gap_l2_sq: f64,
    pub gap_l2: f64,
    pub gap_l2_stderr: f64,
    pub n_gap_samples: usize,
    pub thinned_coarse: Option<ThinnedTrajectory>,
    pub thinned_reference: Option<ThinnedTrajectory>,
}

struct GapAccumulator {
    dim: usize,
    inf_sq: BatchAccumulator,
    l2_sq: BatchAccumulator,
    thin_every: usize,
    coarse_rows: Vec<f64>,
    reference_rows: Vec<f64>,
    evaluated: usize,
}

impl GapAccumulator {
    fn new(dim: usize, expected: usize, thin: Option<usize>) -> Self {
        Self {
            dim,
            inf_sq: BatchAccumulator::new(expected, N_BATCHES),
            l2_sq: BatchAccumulator::new(expected, N_BATCHES),
            thin_every: thin.unwrap_or(0),
            coarse_rows: Vec::new(),
            reference_rows: Vec::new(),
            evaluated: 0,
        }
    }

    fn push(&mut self, x: &[f64], y: &[f64]) {
        let mut inf = 0.0f64;
        let mut l2 = 0.0f64;
        for (a, b) in x.iter().zip(y) {
            let g = (a - b).abs();
            l2 += g * g;
            if g > inf {
                inf = g;
            }
        }
        let inf_sq = inf * inf;
        // norm bracket holds pointwise; violation means an indexing bug
        debug_assert!(inf_sq <= l2 + 1e-12 && l2 <= self.dim as f64 * inf_sq + 1e-12);
        self.inf_sq.push(inf_sq);
        self.l2_sq.push(l2);
        if self.thin_every > 0 && self.evaluated % self.thin_every == 0 {
            self.coarse_rows.extend_from_slice(x);
            self.reference_rows.extend_from_slice(y);
        }
        self.evaluated += 1;
    }

    fn finish(self, config: &StepConfig, reference: String) -> CoupledRun {
        let gap_inf_sq = self.inf_sq.overall_mean();
        let (gap_inf, gap_inf_stderr) = sqrt_with_stderr(gap_inf_sq, self.inf_sq.stderr());
        let gap_l2_sq = self.l2_sq.overall_mean();
        let (gap_l2, gap_l2_stderr) = sqrt_with_stderr(gap_l2_sq, self.l2_sq.stderr());
        let to_thinned = |rows: Vec<f64>, every: usize, dim: usize| {
            let n_rows = rows.len() / dim;
            ThinnedTrajectory {
                every,
                dim,
                n_rows,
                data: rows,
            }
        };
        let (thinned_coarse, thinned_reference) = if self.thin_every > 0 {
            (
                Some(to_thinned(self.coarse_rows, self.thin_every, self.dim)),
                Some(to_thinned(self.reference_rows, self.thin_every, self.dim)),
            )
        } else {
            (None, None)
        };
        CoupledRun {
            config: config.clone(),
            dim: self.dim,
            reference,
            gap_inf_sq,
            gap_inf,
            gap_inf_stderr,
            gap_l2_sq,
            gap_l2,
            gap_l2_stderr,
            n_gap_samples: self.evaluated,
            thinned_coarse,
            thinned_reference,
        }
    }
}

/// Runs the coarse unadjusted chain coupled to a stationary reference via
/// a shared noise stream, and reports max-norm and Euclidean gap moments.
pub fn coupled_bias_run(
    p: &dyn Potential,
    cfg: &StepConfig,
    reference: CouplingReference,
    opts: &CoupledOptions,
) -> Result<CoupledRun, SamplerError> {
    cfg.validate(p.beta())?;
    if opts.gap_stride == 0 {
        return Err(SamplerError::InvalidConfig("gap_stride must be >= 1".into()));
    }
    match reference {
        CouplingReference::ExactGaussian => {
            let g = p.as_gaussian().ok_or_else(|| {
                SamplerError::ReferenceMismatch(
                    "exact reference requires a Gaussian target".into(),
                )
            })?;
            run_exact_gaussian(g, cfg, opts, reference.label())
        }
        CouplingReference::FineUla { substeps } => {
            if substeps == 0 {
                return Err(SamplerError::InvalidConfig("substeps must be >= 1".into()));
            }
            run_fine_ula(p, cfg, substeps, opts, reference.label())
        }
    }
}

fn expected_evals(cfg: &StepConfig, stride: usize) -> usize {
    let retained = cfg.n_steps - cfg.burn_in;
    ((retained + stride - 1) / stride) * cfg.n_chains
}

fn run_exact_gaussian(
    g: &GaussianPotential,
    cfg: &StepConfig,
    opts: &CoupledOptions,
    label: String,
) -> Result<CoupledRun, SamplerError> {
    let d = g.dim();
    let h = cfg.h;
    let lam_sqrt = g.sigma_sqrt_eigvals();
    let lam_inf_sqrt = g.sigma_inf_sqrt_eigvals(h)?;
    // per-eigencoordinate transition coefficients: the coarse chain uses
    // the Brownian endpoint z1, the exact transition uses the correlated
    // integral c z1 + s z2
    let ula_coef: Vec<f64> = g.precision_eigvals().iter().map(|&a| 1.0 - h * a).collect();
    let decay: Vec<f64> = g.precision_eigvals().iter().map(|&a| (-a * h).exp()).collect();
    let (shared, bridge): (Vec<f64>, Vec<f64>) = g
        .precision_eigvals()
        .iter()
        .map(|&a| {
            let e_ah = (-a * h).exp();
            let var_i = (1.0 - (-2.0 * a * h).exp()) / (2.0 * a);
            let c = (1.0 - e_ah) / (a * h.sqrt());
            // nonnegative in exact arithmetic; clamp roundoff
            let s = (var_i - c * c).max(0.0).sqrt();
            (c, s)
        })
        .unzip();
    let sqrt2h = (2.0 * h).sqrt();
    let mean = g.mean();

    let mut acc = GapAccumulator::new(d, expected_evals(cfg, opts.gap_stride), opts.thin);
    let mut z1 = vec![0.0; d];
    let mut z2 = vec![0.0; d];
    let mut x_orig = vec![0.0; d];
    let mut y_orig = vec![0.0; d];
    for chain in 0..cfg.n_chains {
        let mut rng = chain_rng(cfg.seed, chain as u64);
        let (mut xh, mut yh) = match &opts.init {
            CoupledInit::StationaryPair => {
                // one shared normal scaled to each stationary law: the
                // comonotone coupling in the eigenbasis
                fill_standard_normal(&mut rng, &mut z1);
                let xh: Vec<f64> = z1.iter().zip(&lam_inf_sqrt).map(|(z, s)| z * s).collect();
                let yh: Vec<f64> = z1.iter().zip(&lam_sqrt).map(|(z, s)| z * s).collect();
                (xh, yh)
            }
            CoupledInit::SharedPoint(pt) => {
                if pt.len() != d {
                    return Err(SamplerError::InvalidConfig(format!(
                        "init point has length {}, expected {d}",
                        pt.len()
                    )));
                }
                let centered: Vec<f64> = pt.iter().zip(mean).map(|(v, m)| v - m).collect();
                let mut w = vec![0.0; d];
                g.eigvecs_t_apply(&centered, &mut w);
                (w.clone(), w)
            }
            CoupledInit::SharedSample(sampler) => {
                if sampler.dim() != d {
                    return Err(SamplerError::InvalidConfig(format!(
                        "init sampler dimension {} does not match {d}",
                        sampler.dim()
                    )));
                }
                let draw = sampler.sample(&mut rng);
                let centered: Vec<f64> = draw.iter().zip(mean).map(|(v, m)| v - m).collect();
                let mut w = vec![0.0; d];
                g.eigvecs_t_apply(&centered, &mut w);
                (w.clone(), w)
            }
        };
        for step in 0..cfg.n_steps {
            fill_standard_normal(&mut rng, &mut z1);
            fill_standard_normal(&mut rng, &mut z2);
            for i in 0..d {
                xh[i] = ula_coef[i] * xh[i] + sqrt2h * z1[i];
                yh[i] = decay[i] * yh[i] + SQRT_2 * (shared[i] * z1[i] + bridge[i] * z2[i]);
            }
            check_state(&xh, chain, step + 1)?;
            if step >= cfg.burn_in && (step - cfg.burn_in) % opts.gap_stride == 0 {
                g.eigvecs_apply(&xh, &mut x_orig);
                g.eigvecs_apply(&yh, &mut y_orig);
                for i in 0..d {
                    x_orig[i] += mean[i];
                    y_orig[i] += mean[i];
                }
                acc.push(&x_orig, &y_orig);
            }
        }
    }
    Ok(acc.finish(cfg, label))
}

fn run_fine_ula(
    p: &dyn Potential,
    cfg: &StepConfig,
    substeps: usize,
    opts: &CoupledOptions,
    label: String,
) -> Result<CoupledRun, SamplerError> {
    let d = p.dim();
    let h = cfg.h;
    let h_f = h / substeps as f64;
    let sqrt2hf = (2.0 * h_f).sqrt();
    let mut acc = GapAccumulator::new(d, expected_evals(cfg, opts.gap_stride), opts.thin);
    let mut zeta = vec![0.0; d];
    let mut zsum = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    for chain in 0..cfg.n_chains {
        let mut rng = chain_rng(cfg.seed, chain as u64);
        let x0 = match &opts.init {
            CoupledInit::StationaryPair => {
                return Err(SamplerError::ReferenceMismatch(
                    "stationary-pair init requires the exact Gaussian reference".into(),
                ));
            }
            CoupledInit::SharedPoint(pt) => {
                if pt.len() != d {
                    return Err(SamplerError::InvalidConfig(format!(
                        "init point has length {}, expected {d}",
                        pt.len()
                    )));
                }
                pt.clone()
            }
            CoupledInit::SharedSample(sampler) => {
                if sampler.dim() != d {
                    return Err(SamplerError::InvalidConfig(format!(
                        "init sampler dimension {} does not match {d}",
                        sampler.dim()
                    )));
                }
                sampler.sample(&mut rng)
            }
        };
        let mut x = x0.clone();
        let mut y = x0;
        check_state(&x, chain, 0)?;
        for step in 0..cfg.n_steps {
            zsum.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..substeps {
                fill_standard_normal(&mut rng, &mut zeta);
                for (s, z) in zsum.iter_mut().zip(&zeta) {
                    *s += z;
                }
                p.grad_into(&y, &mut gy);
                step_in_place(&mut y, &gy, h_f, sqrt2hf, &zeta);
            }
            p.grad_into(&x, &mut gx);
            // coarse increment sqrt(2h) * (zsum / sqrt(substeps)) equals
            // sqrt(2 h_f) * zsum: the same Brownian path
            step_in_place(&mut x, &gx, h, sqrt2hf, &zsum);
            check_state(&x, chain, step + 1)?;
            check_state(&y, chain, step + 1)?;
            if step >= cfg.burn_in && (step - cfg.burn_in) % opts.gap_stride == 0 {
                acc.push(&x, &y);
            }
        }
    }
    Ok(acc.finish(cfg, label))
}
