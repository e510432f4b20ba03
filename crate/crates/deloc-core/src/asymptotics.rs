//! First-order (in `h`) bias of observables under the unadjusted chain:
//! the two equivalent integral formulas for the slope of
//! `int f dpi - int f dpi_h`, a finite-`h` regression cross-check, and the
//! `sqrt(K)`-delocalization scaling of coordinate-sum observables.
//!
//! Both formulas are Monte Carlo averages under `pi`; reference samples come
//! from exact samplers where available and from a Metropolis-adjusted chain
//! otherwise. `f` is always centered by its estimated `pi`-mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::{Potential, ProductPotential};
use crate::samplers::{
    chain_rng, mala_chain, run_chain, Init, ProductSampler, RunOptions, SamplerError,
    StateSampler, StepConfig, ThinnedTrajectory, N_BATCHES,
};
use crate::stats::BatchAccumulator;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("reference chain acceptance rate {rate:.3} is below 0.4; decrease the reference step")]
    LowAcceptance { rate: f64 },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Observable from the fixed catalog: polynomials of degree at most two,
/// for which the Laplacian is an exact constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// `f(x) = c . x + offset`.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `f(x) = sum_m c_m x_{i_m} x_{j_m} + offset`.
    Quadratic {
        terms: Vec<(usize, usize, f64)>,
        #[serde(default)]
        offset: f64,
    },
    /// `f(x) = x_1 + ... + x_k`.
    CoordinateSum { k: usize },
}

impl ObservableSpec {
    pub fn linear(coeffs: Vec<f64>) -> Self {
        Self::Linear { coeffs, offset: 0.0 }
    }

    /// Diagonal quadratic form `sum_i c_i x_i^2`.
    pub fn quadratic_diag(coeffs: &[f64]) -> Self {
        Self::Quadratic {
            terms: coeffs.iter().enumerate().map(|(i, &c)| (i, i, c)).collect(),
            offset: 0.0,
        }
    }

    /// Product of two distinct coordinates `x_i x_j`.
    pub fn pair(i: usize, j: usize) -> Self {
        Self::Quadratic {
            terms: vec![(i, j, 1.0)],
            offset: 0.0,
        }
    }

    pub fn coordinate_sum(k: usize) -> Self {
        Self::CoordinateSum { k }
    }

    /// Same observable shifted by a constant.
    pub fn with_offset(mut self, c: f64) -> Self {
        match &mut self {
            Self::Linear { offset, .. } | Self::Quadratic { offset, .. } => *offset += c,
            Self::CoordinateSum { k } => {
                let k = *k;
                self = Self::Linear {
                    coeffs: vec![1.0; k],
                    offset: c,
                };
            }
        }
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { coeffs, offset } => {
                coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + offset
            }
            Self::Quadratic { terms, offset } => {
                terms.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum::<f64>() + offset
            }
            Self::CoordinateSum { k } => x[..*k].iter().sum(),
        }
    }

    /// `Delta f`, exact and constant over the whole catalog.
    pub fn laplacian(&self) -> f64 {
        match self {
            Self::Linear { .. } | Self::CoordinateSum { .. } => 0.0,
            Self::Quadratic { terms, .. } => terms
                .iter()
                .filter(|(i, j, _)| i == j)
                .map(|&(_, _, c)| 2.0 * c)
                .sum(),
        }
    }

    /// Largest coordinate index the observable reads, if it reads any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            Self::Linear { coeffs, .. } => coeffs.len().checked_sub(1),
            Self::Quadratic { terms, .. } => terms.iter().map(|&(i, j, _)| i.max(j)).max(),
            Self::CoordinateSum { k } => k.checked_sub(1),
        }
    }

    fn validate(&self, d: usize) -> Result<(), AsymptoticsError> {
        match self.max_index() {
            None => Err(AsymptoticsError::InvalidParameter(
                "observable reads no coordinate".into(),
            )),
            Some(m) if m >= d => Err(AsymptoticsError::InvalidParameter(format!(
                "observable reads coordinate {m}, potential has d = {d}"
            ))),
            Some(_) => Ok(()),
        }
    }
}

/// Where reference samples from `pi` come from.
pub enum SlopeReference<'a> {
    /// Exact eigenbasis sampler; the potential must be Gaussian.
    ExactGaussian,
    /// Caller-supplied exact sampler for `pi`.
    Exact(&'a dyn StateSampler),
    /// Metropolis-adjusted chain at this step size (asymptotically unbiased).
    Mala { h: f64 },
}

/// Monte Carlo estimates of the first-order bias slope by both integral
/// formulas: `int f dpi - int f dpi_h = slope * h + o(h)`.
#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderBiasReport {
    /// `(1/4) E[-2 Delta f + |grad V|^2 (f - Ef)]`.
    pub slope_formula_a: f64,
    pub stderr_a: f64,
    /// `-(1/4) (E[Delta f] + E[(f - Ef) Delta log pi])`.
    pub slope_formula_b: f64,
    pub stderr_b: f64,
    /// Batch stderr of the per-sample difference of the two formulas.
    pub stderr_diff: f64,
    /// Regression estimate from finite-`h` runs, when one was attached.
    pub slope_empirical: Option<f64>,
    pub stderr_empirical: Option<f64>,
    /// Estimated `E_pi f` used for centering.
    pub f_mean: f64,
    pub n_mc: usize,
}

/// One reference source that can be replayed: exact samplers are re-seeded,
/// stored rows are re-read.
enum SampleSource<'a> {
    Sampler { s: &'a dyn StateSampler, seed: u64 },
    Rows(&'a ThinnedTrajectory),
}

impl SampleSource<'_> {
    fn n_available(&self, requested: usize) -> usize {
        match self {
            Self::Sampler { .. } => requested,
            Self::Rows(t) => t.n_rows.min(requested),
        }
    }

    fn for_each(&self, n: usize, mut visit: impl FnMut(&[f64])) {
        match self {
            Self::Sampler { s, seed } => {
                let mut rng = chain_rng(*seed, 0);
                let mut buf = vec![0.0; s.dim()];
                for _ in 0..n {
                    s.sample_into(&mut rng, &mut buf);
                    visit(&buf);
                }
            }
            Self::Rows(t) => {
                for r in 0..n {
                    visit(t.row(r));
                }
            }
        }
    }
}

/// Draws a reference MALA trajectory with `n_mc` thinned rows.
fn mala_reference(
    p: &dyn Potential,
    h: f64,
    n_mc: usize,
    seed: u64,
) -> Result<ThinnedTrajectory, AsymptoticsError> {
    let thin = 5;
    let burn_in = StepConfig::default_burn_in(p.alpha(), h).min(20_000);
    let cfg = StepConfig {
        h,
        n_steps: burn_in + thin * n_mc,
        burn_in,
        seed,
        n_chains: 1,
    };
    let run = mala_chain(
        p,
        &cfg,
        &Init::Point(vec![0.0; p.dim()]),
        &RunOptions {
            thin: Some(thin),
            track_covariance: false,
        },
    )?;
    let rate = run.acceptance_rate.expect("mala reports acceptance");
    if rate < 0.4 {
        return Err(AsymptoticsError::LowAcceptance { rate });
    }
    Ok(run.thinned.expect("thinning was requested"))
}

/// Estimates the first-order bias slope of `f` by both Prop-style integral
/// formulas, centering `f` and the pointwise Laplacian factors by their
/// sample means (a free control variate: the population value is unchanged
/// because `E[f - Ef] = 0`).
pub fn first_order_slope(
    p: &dyn Potential,
    f: &ObservableSpec,
    n_mc: usize,
    seed: u64,
    reference: &SlopeReference,
) -> Result<FirstOrderBiasReport, AsymptoticsError> {
    let d = p.dim();
    f.validate(d)?;
    if n_mc < 2 * N_BATCHES {
        return Err(AsymptoticsError::InvalidParameter(format!(
            "n_mc must be at least {}, got {n_mc}",
            2 * N_BATCHES
        )));
    }
    let gaussian_sampler;
    let rows;
    let source = match reference {
        SlopeReference::ExactGaussian => {
            let g = p.as_gaussian().ok_or_else(|| {
                AsymptoticsError::InvalidParameter(
                    "exact_gaussian reference requires a Gaussian potential".into(),
                )
            })?;
            gaussian_sampler = crate::samplers::GaussianSampler::target(g);
            SampleSource::Sampler {
                s: &gaussian_sampler,
                seed,
            }
        }
        SlopeReference::Exact(s) => {
            if s.dim() != d {
                return Err(AsymptoticsError::InvalidParameter(format!(
                    "reference sampler has dim {}, potential has {d}",
                    s.dim()
                )));
            }
            SampleSource::Sampler { s: *s, seed }
        }
        SlopeReference::Mala { h } => {
            if !(*h > 0.0 && *h <= 1.0 / p.beta()) {
                return Err(AsymptoticsError::InvalidParameter(format!(
                    "mala step must lie in (0, 1/beta], got {h}"
                )));
            }
            rows = mala_reference(p, *h, n_mc, seed)?;
            SampleSource::Rows(&rows)
        }
    };
    let n = source.n_available(n_mc);

    // Pass 1: means of f, |grad V|^2, and Delta log pi = -Delta V.
    let mut grad = vec![0.0; d];
    let (mut f_sum, mut g_sum, mut dl_sum) = (0.0, 0.0, 0.0);
    source.for_each(n, |x| {
        f_sum += f.value(x);
        p.grad_into(x, &mut grad);
        g_sum += grad.iter().map(|v| v * v).sum::<f64>();
        dl_sum += -p.laplacian(x);
    });
    let (f_mean, g_mean, dl_mean) = (f_sum / n as f64, g_sum / n as f64, dl_sum / n as f64);

    // Pass 2: centered per-sample statistics with batch-means stderr.
    let lap_f = f.laplacian();
    let mut acc_a = BatchAccumulator::new(n, N_BATCHES);
    let mut acc_b = BatchAccumulator::new(n, N_BATCHES);
    let mut acc_d = BatchAccumulator::new(n, N_BATCHES);
    source.for_each(n, |x| {
        let ft = f.value(x) - f_mean;
        p.grad_into(x, &mut grad);
        let g = grad.iter().map(|v| v * v).sum::<f64>();
        let dl = -p.laplacian(x);
        let a = 0.25 * (-2.0 * lap_f + (g - g_mean) * ft);
        let b = -0.25 * (lap_f + (dl - dl_mean) * ft);
        acc_a.push(a);
        acc_b.push(b);
        acc_d.push(a - b);
    });
    Ok(FirstOrderBiasReport {
        slope_formula_a: acc_a.overall_mean(),
        stderr_a: acc_a.stderr(),
        slope_formula_b: acc_b.overall_mean(),
        stderr_b: acc_b.stderr(),
        stderr_diff: acc_d.stderr(),
        slope_empirical: None,
        stderr_empirical: None,
        f_mean,
        n_mc: n,
    })
}

/// Budget for the finite-`h` bias regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSlopeConfig {
    /// Retained (post-burn-in) coarse steps per grid point.
    pub n_retained: usize,
    /// Burn-in override; defaults to the mixing-time heuristic per point.
    pub burn_in: Option<usize>,
    pub n_chains: usize,
    /// Thinning stride for observable evaluation along the chain.
    pub thin: usize,
    /// Reference draws (or thinned reference rows) for `E_pi f`.
    pub n_ref: usize,
    pub seed: u64,
}

/// One grid point of the bias regression.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmpiricalBiasPoint {
    pub h: f64,
    /// `E_pi f - E_{pi_h} f` estimate.
    pub bias: f64,
    pub stderr: f64,
    pub chain_mean: f64,
}

/// Weighted least-squares fit of `bias(h) = slope * h`.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalSlope {
    pub slope: f64,
    pub stderr: f64,
    pub points: Vec<EmpiricalBiasPoint>,
    pub ref_mean: f64,
    pub ref_stderr: f64,
}

/// Measures `bias(h) = E_pi f - E_{pi_h} f` on a step-size grid by long
/// unadjusted runs against a fixed reference estimate of `E_pi f`, then fits
/// a line through the origin with inverse-variance weights.
pub fn empirical_slope(
    p: &dyn Potential,
    f: &ObservableSpec,
    h_grid: &[f64],
    reference: &SlopeReference,
    cfg: &EmpiricalSlopeConfig,
) -> Result<EmpiricalSlope, AsymptoticsError> {
    let d = p.dim();
    f.validate(d)?;
    if h_grid.len() < 4 {
        return Err(AsymptoticsError::InvalidParameter(format!(
            "h_grid needs at least 4 points, got {}",
            h_grid.len()
        )));
    }
    for &h in h_grid {
        if !(h > 0.0 && h <= 1.0 / p.beta()) {
            return Err(AsymptoticsError::InvalidParameter(format!(
                "grid step {h} outside (0, 1/beta = {}]",
                1.0 / p.beta()
            )));
        }
    }
    if cfg.thin == 0 || cfg.n_chains == 0 || cfg.n_retained < cfg.thin * 2 * N_BATCHES {
        return Err(AsymptoticsError::InvalidParameter(
            "empirical slope budget too small for batch error bars".into(),
        ));
    }

    // Reference E_pi f, shared by every grid point.
    let (ref_mean, ref_stderr) = reference_f_mean(p, f, cfg.n_ref, cfg.seed, reference)?;

    let mut points = Vec::with_capacity(h_grid.len());
    for (idx, &h) in h_grid.iter().enumerate() {
        let burn_in = cfg
            .burn_in
            .unwrap_or_else(|| StepConfig::default_burn_in(p.alpha(), h));
        let step_cfg = StepConfig {
            h,
            n_steps: burn_in + cfg.n_retained,
            burn_in,
            seed: cfg.seed.wrapping_add(1 + idx as u64),
            n_chains: cfg.n_chains,
        };
        let run = run_chain(
            p,
            &step_cfg,
            &Init::Point(vec![0.0; d]),
            &RunOptions {
                thin: Some(cfg.thin),
                track_covariance: false,
            },
        )?;
        let rows = run.thinned.expect("thinning was requested");
        let mut acc = BatchAccumulator::new(rows.n_rows, N_BATCHES);
        for r in 0..rows.n_rows {
            acc.push(f.value(rows.row(r)));
        }
        let chain_mean = acc.overall_mean();
        points.push(EmpiricalBiasPoint {
            h,
            bias: ref_mean - chain_mean,
            stderr: (ref_stderr * ref_stderr + acc.stderr() * acc.stderr()).sqrt(),
            chain_mean,
        });
    }

    // WLS through the origin: slope = sum(w h b) / sum(w h^2), w = 1/se^2.
    let (mut num, mut den) = (0.0, 0.0);
    for pt in &points {
        if !(pt.stderr > 0.0) {
            return Err(AsymptoticsError::InvalidParameter(format!(
                "degenerate error bar at h = {}",
                pt.h
            )));
        }
        let w = 1.0 / (pt.stderr * pt.stderr);
        num += w * pt.h * pt.bias;
        den += w * pt.h * pt.h;
    }
    Ok(EmpiricalSlope {
        slope: num / den,
        stderr: (1.0 / den).sqrt(),
        points,
        ref_mean,
        ref_stderr,
    })
}

fn reference_f_mean(
    p: &dyn Potential,
    f: &ObservableSpec,
    n_ref: usize,
    seed: u64,
    reference: &SlopeReference,
) -> Result<(f64, f64), AsymptoticsError> {
    if n_ref < 2 * N_BATCHES {
        return Err(AsymptoticsError::InvalidParameter(format!(
            "n_ref must be at least {}, got {n_ref}",
            2 * N_BATCHES
        )));
    }
    let push_all = |source: &SampleSource, n: usize| {
        let mut acc = BatchAccumulator::new(n, N_BATCHES);
        source.for_each(n, |x| acc.push(f.value(x)));
        (acc.overall_mean(), acc.stderr())
    };
    match reference {
        SlopeReference::ExactGaussian => {
            let g = p.as_gaussian().ok_or_else(|| {
                AsymptoticsError::InvalidParameter(
                    "exact_gaussian reference requires a Gaussian potential".into(),
                )
            })?;
            let s = crate::samplers::GaussianSampler::target(g);
            Ok(push_all(&SampleSource::Sampler { s: &s, seed }, n_ref))
        }
        SlopeReference::Exact(s) => {
            if s.dim() != p.dim() {
                return Err(AsymptoticsError::InvalidParameter(format!(
                    "reference sampler has dim {}, potential has {}",
                    s.dim(),
                    p.dim()
                )));
            }
            Ok(push_all(&SampleSource::Sampler { s: *s, seed }, n_ref))
        }
        SlopeReference::Mala { h } => {
            let rows = mala_reference(p, *h, n_ref, seed)?;
            Ok(push_all(&SampleSource::Rows(&rows), rows.n_rows))
        }
    }
}

/// Budget for the `sqrt(K)` scaling check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqrtKConfig {
    pub n_mc: usize,
    pub seed: u64,
}

/// Slope of one coordinate-sum observable.
#[derive(Debug, Clone, Serialize)]
pub struct SqrtKRow {
    pub k: usize,
    pub slope_a: f64,
    pub stderr_a: f64,
    pub slope_b: f64,
    pub stderr_b: f64,
    /// `slope_b * h`: first-order bias prediction at the working step size.
    pub predicted_bias: f64,
    /// `|slope_b| > 3 stderr_b`: distinguishable from zero at this budget.
    pub resolved: bool,
}

/// Outcome of the coordinate-sum scaling check.
#[derive(Debug, Clone, Serialize)]
pub struct SqrtKReport {
    pub h: f64,
    pub rows: Vec<SqrtKRow>,
    /// Log-log regression exponent of `|slope_b|` against `K` over the
    /// resolved rows; a square-root law gives 1/2, a full-delocalization
    /// cap gives less.
    pub exponent: Option<f64>,
    pub exponent_stderr: Option<f64>,
    /// `max_K |slope_b| / sqrt(K)` over resolved rows.
    pub c1_proxy: Option<f64>,
    /// True when fewer than two resolved slopes exist at this budget.
    pub unresolved: bool,
}

/// Estimates the first-order slope of `f_K = x_1 + ... + x_K` for each `K`
/// on an exactly-sampleable product target and fits the growth exponent in
/// `K`. Slopes statistically indistinguishable from zero are excluded from
/// the fit; with fewer than two resolved points the report is flagged
/// unresolved instead of inventing an exponent.
pub fn sqrt_k_scaling_check(
    p: &ProductPotential,
    k_grid: &[usize],
    h: f64,
    cfg: &SqrtKConfig,
) -> Result<SqrtKReport, AsymptoticsError> {
    let d = p.dim();
    if k_grid.is_empty() {
        return Err(AsymptoticsError::InvalidParameter("k_grid is empty".into()));
    }
    for &k in k_grid {
        if k == 0 || k > d {
            return Err(AsymptoticsError::InvalidParameter(format!(
                "K = {k} outside 1..={d}"
            )));
        }
    }
    if !(h > 0.0 && h <= 1.0 / p.beta()) {
        return Err(AsymptoticsError::InvalidParameter(format!(
            "h = {h} outside (0, 1/beta = {}]",
            1.0 / p.beta()
        )));
    }
    let sampler = ProductSampler::new(p)?;
    let mut rows = Vec::with_capacity(k_grid.len());
    for (idx, &k) in k_grid.iter().enumerate() {
        let f = ObservableSpec::coordinate_sum(k);
        let rep = first_order_slope(
            p,
            &f,
            cfg.n_mc,
            cfg.seed.wrapping_add(idx as u64),
            &SlopeReference::Exact(&sampler),
        )?;
        rows.push(SqrtKRow {
            k,
            slope_a: rep.slope_formula_a,
            stderr_a: rep.stderr_a,
            slope_b: rep.slope_formula_b,
            stderr_b: rep.stderr_b,
            predicted_bias: rep.slope_formula_b * h,
            resolved: rep.slope_formula_b.abs() > 3.0 * rep.stderr_b,
        });
    }

    let resolved: Vec<&SqrtKRow> = rows.iter().filter(|r| r.resolved).collect();
    let distinct = {
        let mut ks: Vec<usize> = resolved.iter().map(|r| r.k).collect();
        ks.dedup();
        ks.len()
    };
    if distinct < 2 {
        return Ok(SqrtKReport {
            h,
            rows,
            exponent: None,
            exponent_stderr: None,
            c1_proxy: None,
            unresolved: true,
        });
    }

    // OLS of log|slope| on log K; stderr by the delta method from the
    // per-slope error bars.
    let xs: Vec<f64> = resolved.iter().map(|r| (r.k as f64).ln()).collect();
    let ys: Vec<f64> = resolved.iter().map(|r| r.slope_b.abs().ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let mut exponent = 0.0;
    let mut var = 0.0;
    for ((x, y), r) in xs.iter().zip(&ys).zip(&resolved) {
        let a = (x - x_mean) / sxx;
        exponent += a * y;
        let rel = r.stderr_b / r.slope_b.abs();
        var += a * a * rel * rel;
    }
    let c1 = resolved
        .iter()
        .map(|r| r.slope_b.abs() / (r.k as f64).sqrt())
        .fold(0.0f64, f64::max);
    Ok(SqrtKReport {
        h,
        rows,
        exponent: Some(exponent),
        exponent_stderr: Some(var.sqrt()),
        c1_proxy: Some(c1),
        unresolved: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{tridiagonal_example, GaussianPotential, LambdaSpec};
    use approx::assert_relative_eq;

    #[test]
    fn observable_values_and_laplacians() {
        let x = [1.0, 2.0, -3.0];
        let lin = ObservableSpec::linear(vec![2.0, 0.0, 1.0]);
        assert_eq!(lin.value(&x), -1.0);
        assert_eq!(lin.laplacian(), 0.0);
        assert_eq!(lin.max_index(), Some(2));

        let quad = ObservableSpec::quadratic_diag(&[1.0, 0.5]);
        assert_eq!(quad.value(&x), 1.0 + 2.0);
        assert_eq!(quad.laplacian(), 3.0);

        let pair = ObservableSpec::pair(0, 2);
        assert_eq!(pair.value(&x), -3.0);
        assert_eq!(pair.laplacian(), 0.0);

        let cs = ObservableSpec::coordinate_sum(2);
        assert_eq!(cs.value(&x), 3.0);
        assert_eq!(cs.laplacian(), 0.0);
        assert_eq!(cs.max_index(), Some(1));

        let shifted = ObservableSpec::coordinate_sum(2).with_offset(7.0);
        assert_eq!(shifted.value(&x), 10.0);
        assert_eq!(shifted.laplacian(), 0.0);
    }

    #[test]
    fn bad_observables_rejected() {
        let p = GaussianPotential::standard(2);
        let too_wide = ObservableSpec::linear(vec![1.0, 1.0, 1.0]);
        assert!(first_order_slope(&p, &too_wide, 1000, 1, &SlopeReference::ExactGaussian).is_err());
        let empty = ObservableSpec::linear(vec![]);
        assert!(first_order_slope(&p, &empty, 1000, 1, &SlopeReference::ExactGaussian).is_err());
        let f = ObservableSpec::linear(vec![1.0]);
        assert!(first_order_slope(&p, &f, 10, 1, &SlopeReference::ExactGaussian).is_err());
    }

    #[test]
    fn linear_f_gaussian_slopes_vanish() {
        // Gaussian target: Delta log pi is constant, so formula B is
        // exactly zero sample-by-sample; formula A is zero in expectation.
        let p = GaussianPotential::standard(4);
        let f = ObservableSpec::linear(vec![1.0, 0.0, 0.0, 0.0]);
        let r = first_order_slope(&p, &f, 200_000, 3, &SlopeReference::ExactGaussian).unwrap();
        assert_eq!(r.slope_formula_b, 0.0);
        assert_eq!(r.stderr_b, 0.0);
        assert!(r.stderr_a > 0.0);
        assert!(
            r.slope_formula_a.abs() <= 3.0 * r.stderr_a,
            "slope_a = {} vs se {}",
            r.slope_formula_a,
            r.stderr_a
        );
    }

    #[test]
    fn second_moment_slope_is_minus_half() {
        // f = x^2 on N(0,1): Delta f = 2 and Delta log pi = -1, so formula B
        // collapses to -1/2 exactly; formula A must agree by Monte Carlo.
        let p = GaussianPotential::standard(1);
        let f = ObservableSpec::quadratic_diag(&[1.0]);
        let r = first_order_slope(&p, &f, 400_000, 5, &SlopeReference::ExactGaussian).unwrap();
        assert_relative_eq!(r.slope_formula_b, -0.5, epsilon = 1e-12);
        assert_eq!(r.stderr_b, 0.0);
        assert!(r.stderr_a > 0.0 && r.stderr_a < 0.01);
        assert!(
            (r.slope_formula_a + 0.5).abs() <= 3.0 * r.stderr_a,
            "slope_a = {} se {}",
            r.slope_formula_a,
            r.stderr_a
        );
        assert!(
            (r.slope_formula_a - r.slope_formula_b).abs() <= 3.0 * r.stderr_diff,
            "diff {} vs se {}",
            r.slope_formula_a - r.slope_formula_b,
            r.stderr_diff
        );
    }

    #[test]
    fn lattice_pair_product_two_forms_agree() {
        let p = tridiagonal_example(8, LambdaSpec::QuarticVar { alpha: 1.0, c: 0.5 }).unwrap();
        let f = ObservableSpec::pair(0, 1);
        let r =
            first_order_slope(&p, &f, 150_000, 7, &SlopeReference::Mala { h: 0.05 }).unwrap();
        assert!(r.stderr_diff > 0.0);
        assert!(
            (r.slope_formula_a - r.slope_formula_b).abs() <= 3.0 * r.stderr_diff,
            "a = {}, b = {}, se_diff = {}",
            r.slope_formula_a,
            r.slope_formula_b,
            r.stderr_diff
        );
        // Pairing must not inflate the error of the difference.
        assert!(r.stderr_diff <= r.stderr_a + r.stderr_b);
    }

    #[test]
    fn slope_negates_with_the_observable() {
        let p = GaussianPotential::standard(2);
        let plus = ObservableSpec::quadratic_diag(&[1.0, 0.5]);
        let minus = ObservableSpec::quadratic_diag(&[-1.0, -0.5]);
        let rp = first_order_slope(&p, &plus, 100_000, 11, &SlopeReference::ExactGaussian).unwrap();
        let rm =
            first_order_slope(&p, &minus, 100_000, 11, &SlopeReference::ExactGaussian).unwrap();
        assert_relative_eq!(rp.slope_formula_a, -rm.slope_formula_a, epsilon = 1e-12);
        assert_relative_eq!(rp.slope_formula_b, -rm.slope_formula_b, epsilon = 1e-12);
    }

    #[test]
    fn centering_makes_offsets_irrelevant() {
        let p = GaussianPotential::standard(2);
        let f = ObservableSpec::quadratic_diag(&[1.0, -0.3]);
        let g = ObservableSpec::quadratic_diag(&[1.0, -0.3]).with_offset(5.0);
        let rf = first_order_slope(&p, &f, 100_000, 13, &SlopeReference::ExactGaussian).unwrap();
        let rg = first_order_slope(&p, &g, 100_000, 13, &SlopeReference::ExactGaussian).unwrap();
        assert_relative_eq!(rf.slope_formula_a, rg.slope_formula_a, max_relative = 1e-9);
        assert_relative_eq!(rf.slope_formula_b, rg.slope_formula_b, max_relative = 1e-9);
        assert_relative_eq!(rg.f_mean, rf.f_mean + 5.0, max_relative = 1e-9);
    }

    #[test]
    fn coordinate_sum_matches_explicit_linear() {
        let p = GaussianPotential::standard(5);
        let cs = ObservableSpec::coordinate_sum(3);
        let lin = ObservableSpec::linear(vec![1.0, 1.0, 1.0]);
        let a = first_order_slope(&p, &cs, 80_000, 17, &SlopeReference::ExactGaussian).unwrap();
        let b = first_order_slope(&p, &lin, 80_000, 17, &SlopeReference::ExactGaussian).unwrap();
        assert_eq!(a.slope_formula_a, b.slope_formula_a);
        assert_eq!(a.slope_formula_b, b.slope_formula_b);
    }

    #[test]
    fn exact_gaussian_reference_requires_gaussian_target() {
        let p = tridiagonal_example(4, LambdaSpec::QuarticVar { alpha: 1.0, c: 0.5 }).unwrap();
        let f = ObservableSpec::linear(vec![1.0]);
        assert!(matches!(
            first_order_slope(&p, &f, 1000, 1, &SlopeReference::ExactGaussian),
            Err(AsymptoticsError::InvalidParameter(_))
        ));
        let wrong_dim = crate::samplers::GaussianSampler::target(&GaussianPotential::standard(3));
        assert!(first_order_slope(&p, &f, 1000, 1, &SlopeReference::Exact(&wrong_dim)).is_err());
    }

    #[test]
    fn saturated_reference_chain_rejected() {
        // Unadjusted-size steps at the convexity edge: the adjusted chain
        // rejects nearly everything in d = 64, which must surface as an
        // acceptance error rather than silent garbage.
        let p = ProductPotential::perturbed_gaussian(64, 4, 0.3, 0.7, -0.3).unwrap();
        let f = ObservableSpec::coordinate_sum(4);
        let h = 1.0 / p.beta();
        match first_order_slope(&p, &f, 1_000, 19, &SlopeReference::Mala { h }) {
            Err(AsymptoticsError::LowAcceptance { rate }) => assert!(rate < 0.4),
            other => panic!("expected LowAcceptance, got {other:?}"),
        }
    }

    #[test]
    fn empirical_slope_matches_exact_curve_1d() {
        // N(0,1), f = x^2: the biased stationary variance is 1/(1 - h/2),
        // so bias(h) = 1 - 1/(1 - h/2) and the fitted slope sits near -1/2.
        let p = GaussianPotential::standard(1);
        let f = ObservableSpec::quadratic_diag(&[1.0]);
        let grid = [0.02, 0.04, 0.06, 0.08];
        let cfg = EmpiricalSlopeConfig {
            n_retained: 30_000_000,
            burn_in: None,
            n_chains: 1,
            thin: 5,
            n_ref: 2_000_000,
            seed: 123,
        };
        let e = empirical_slope(&p, &f, &grid, &SlopeReference::ExactGaussian, &cfg).unwrap();
        // Regression oracle: the same weighted fit applied to the exact
        // bias curve instead of the measured one.
        let (mut num, mut den) = (0.0, 0.0);
        for pt in &e.points {
            let exact = 1.0 - 1.0 / (1.0 - pt.h / 2.0);
            let w = 1.0 / (pt.stderr * pt.stderr);
            num += w * pt.h * exact;
            den += w * pt.h * pt.h;
            assert!(
                (pt.bias - exact).abs() <= 4.0 * pt.stderr,
                "h = {}: bias {} vs exact {exact} (se {})",
                pt.h,
                pt.bias,
                pt.stderr
            );
        }
        let oracle = num / den;
        assert!((oracle + 0.5).abs() <= 0.05, "exact-curve fit {oracle}");
        assert!(
            (e.slope - oracle).abs() <= 3.0 * e.stderr,
            "slope {} vs oracle {oracle} (se {})",
            e.slope,
            e.stderr
        );
        assert!(
            (e.slope + 0.5).abs() <= 0.05 + 3.0 * e.stderr,
            "slope {} vs -0.5 (se {})",
            e.slope,
            e.stderr
        );
        // Formula-vs-empirical: the integral form gives exactly -1/2 here.
        let formulas =
            first_order_slope(&p, &f, 100_000, 24, &SlopeReference::ExactGaussian).unwrap();
        let tol = (0.1 * formulas.slope_formula_b.abs())
            .max(3.0 * (e.stderr + formulas.stderr_b));
        assert!(
            (e.slope - formulas.slope_formula_b).abs() <= tol,
            "empirical {} vs formula {} (tol {tol})",
            e.slope,
            formulas.slope_formula_b
        );
    }

    #[test]
    fn empirical_slope_zero_and_sign_flip_for_means() {
        let p = GaussianPotential::standard(1);
        let f = ObservableSpec::linear(vec![1.0]);
        let grid = [0.02, 0.04, 0.06, 0.08];
        let cfg = EmpiricalSlopeConfig {
            n_retained: 200_000,
            burn_in: None,
            n_chains: 1,
            thin: 5,
            n_ref: 200_000,
            seed: 29,
        };
        let e = empirical_slope(&p, &f, &grid, &SlopeReference::ExactGaussian, &cfg).unwrap();
        assert!(
            e.slope.abs() <= 3.0 * e.stderr,
            "slope {} vs se {}",
            e.slope,
            e.stderr
        );
        let neg = ObservableSpec::linear(vec![-1.0]);
        let en = empirical_slope(&p, &neg, &grid, &SlopeReference::ExactGaussian, &cfg).unwrap();
        assert_relative_eq!(en.slope, -e.slope, epsilon = 1e-12);
        assert_relative_eq!(en.stderr, e.stderr, epsilon = 1e-12);
    }

    #[test]
    fn empirical_slope_validates_grid() {
        let p = GaussianPotential::standard(1);
        let f = ObservableSpec::quadratic_diag(&[1.0]);
        let cfg = EmpiricalSlopeConfig {
            n_retained: 100_000,
            burn_in: None,
            n_chains: 1,
            thin: 5,
            n_ref: 10_000,
            seed: 1,
        };
        let short = [0.02, 0.04, 0.06];
        assert!(empirical_slope(&p, &f, &short, &SlopeReference::ExactGaussian, &cfg).is_err());
        let out_of_range = [0.02, 0.04, 0.06, 1.5];
        assert!(
            empirical_slope(&p, &f, &out_of_range, &SlopeReference::ExactGaussian, &cfg).is_err()
        );
    }

    #[test]
    fn sqrt_k_pure_gaussian_is_unresolved() {
        // No perturbation: every slope is exactly zero (formula B is
        // sample-wise zero for constant curvature), so no exponent exists.
        let p = ProductPotential::standard_gaussian(64);
        let cfg = SqrtKConfig { n_mc: 50_000, seed: 31 };
        let r = sqrt_k_scaling_check(&p, &[1, 4, 16], 0.05, &cfg).unwrap();
        assert!(r.unresolved);
        assert!(r.exponent.is_none() && r.c1_proxy.is_none());
        for row in &r.rows {
            assert_eq!(row.slope_b, 0.0);
            assert!(!row.resolved);
        }
    }

    #[test]
    fn sqrt_k_mixture_block_saturates() {
        // Four perturbed coordinates: the slope grows like min(K, 4), so
        // the log-log exponent over K in {1,4,16,64} is 0.300 and in
        // particular falls below the sqrt(K) envelope's 0.65 ceiling.
        // Per-coordinate slope by quadrature: -0.0147774.
        let p = ProductPotential::perturbed_gaussian(256, 4, 0.3, 0.7, -0.3).unwrap();
        let cfg = SqrtKConfig { n_mc: 200_000, seed: 37 };
        let r = sqrt_k_scaling_check(&p, &[1, 4, 16, 64], 0.02, &cfg).unwrap();
        assert!(!r.unresolved);
        for row in &r.rows {
            assert!(row.resolved, "K = {} unresolved", row.k);
            let expect = -0.0147774 * (row.k.min(4) as f64);
            assert!(
                (row.slope_b - expect).abs() <= (3.0 * row.stderr_b).max(0.05 * expect.abs()),
                "K = {}: slope {} vs {expect} (se {})",
                row.k,
                row.slope_b,
                row.stderr_b
            );
            assert_relative_eq!(row.predicted_bias, row.slope_b * 0.02, epsilon = 1e-15);
        }
        let exponent = r.exponent.unwrap();
        assert!((exponent - 0.300).abs() < 0.05, "exponent {exponent}");
        assert!(exponent <= 0.65);
        assert!(r.c1_proxy.unwrap() > 0.0);
    }

    #[test]
    fn sqrt_k_slope_independent_of_dimension() {
        let cfg = SqrtKConfig { n_mc: 100_000, seed: 41 };
        let mut slopes = Vec::new();
        for d in [256usize, 1024] {
            let p = ProductPotential::perturbed_gaussian(d, 4, 0.3, 0.7, -0.3).unwrap();
            let r = sqrt_k_scaling_check(&p, &[16], 0.02, &cfg).unwrap();
            slopes.push((r.rows[0].slope_b, r.rows[0].stderr_b));
        }
        let (s1, se1) = slopes[0];
        let (s2, se2) = slopes[1];
        let combined = (se1 * se1 + se2 * se2).sqrt();
        assert!(
            (s1 - s2).abs() <= 3.0 * combined,
            "slopes {s1} vs {s2}, combined se {combined}"
        );
    }

    #[test]
    fn sqrt_k_validates_inputs() {
        let p = ProductPotential::standard_gaussian(8);
        let cfg = SqrtKConfig { n_mc: 10_000, seed: 1 };
        assert!(sqrt_k_scaling_check(&p, &[], 0.05, &cfg).is_err());
        assert!(sqrt_k_scaling_check(&p, &[0], 0.05, &cfg).is_err());
        assert!(sqrt_k_scaling_check(&p, &[9], 0.05, &cfg).is_err());
        assert!(sqrt_k_scaling_check(&p, &[4], 1.5, &cfg).is_err());
    }
}
