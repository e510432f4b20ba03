//! Subcommand runners. Each composes the core library, writes
//! `results.csv` + `summary.json` + `plots/*.svg` through the shared
//! output conventions, and derives all randomness from the config seed.
//!
//! Sweep points are numbered in declared order; point `i` owns the seed
//! block `base + 16 i .. base + 16 i + 15`, so runs are reproducible for
//! any thread count and sub-tasks inside a point never share a stream.
//! Wall-clock timings go to stderr only, keeping the emitted files
//! byte-deterministic for a fixed (config, seed).

pub mod asymptotic;
pub mod bias_scan;
pub mod chain;
pub mod coupling;
pub mod negative;
pub mod theory;

use deloc_core::asymptotics::AsymptoticsError;
use deloc_core::graph::{InteractionGraph, SparsityProfile};
use deloc_core::metrics::MetricsError;
use deloc_core::potentials::Potential;
use deloc_core::samplers::{
    ProductSampler, RotatedSampler, SamplerError, StateSampler, StepConfig,
};
use deloc_core::theory_bounds::{r_index, TheoryError};

use crate::config::{BuiltPotential, CliError, ReferenceSpec};

/// Seeds reserved per sweep point for independent sub-tasks.
pub const SEED_STRIDE: u64 = 16;

/// Seed of sub-task `task` of sweep point `point_idx`.
pub fn point_seed(base: u64, point_idx: usize, task: u64) -> u64 {
    debug_assert!(task < SEED_STRIDE);
    base.wrapping_add(point_idx as u64 * SEED_STRIDE)
        .wrapping_add(task)
}

/// Burn-in for coupled pairs started in (marginal) stationarity: only the
/// gap itself needs to relax, at rate `alpha` per unit time.
pub fn gap_burn_in(alpha: f64, h: f64) -> usize {
    ((20.0 / (alpha * h)).ceil() as usize).max(1_000)
}

/// Invalid-parameter sampler failures are config errors; divergence and
/// other mid-run failures are runtime errors.
pub fn map_sampler(e: SamplerError) -> CliError {
    match e {
        SamplerError::InvalidConfig(_) | SamplerError::ReferenceMismatch(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn map_theory(e: TheoryError) -> CliError {
    match e {
        TheoryError::InvalidParameter(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn map_asymptotics(e: AsymptoticsError) -> CliError {
    match e {
        AsymptoticsError::InvalidParameter(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn map_metrics(e: MetricsError) -> CliError {
    match e {
        MetricsError::InvalidParameter(_) | MetricsError::TooFewSamples { .. } => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

/// Total/burn-in step geometry from a retained-step budget.
pub fn step_config(h: f64, retained: usize, burn_in: usize, seed: u64, n_chains: usize) -> StepConfig {
    StepConfig::new(h, burn_in + retained, burn_in, seed, n_chains)
}

/// Sparsity profile long enough for every step count the bound search (or
/// a fixed `n_hint`) can query; required because edgeless graphs never
/// saturate.
pub fn profile_for_bounds(
    graph: &InteractionGraph,
    alpha: f64,
    beta: f64,
    h: f64,
    n_hint: Option<usize>,
) -> Result<SparsityProfile, CliError> {
    let d = graph.d();
    if !(alpha > 0.0 && h > 0.0) {
        return Err(CliError::Config(format!(
            "need positive alpha and h for the bound search, got alpha = {alpha}, h = {h}"
        )));
    }
    // mirrors the optimizer's search cap `ceil(10 log(4 sqrt d) / (h alpha))`
    let cap = (10.0 * (4.0 * (d as f64).sqrt()).ln() / (h * alpha)).ceil() as usize;
    let n_needed = cap.max(n_hint.unwrap_or(0)).max(1);
    let k = r_index(n_needed, h, beta, d) + 1;
    graph
        .sparsity_profile(k)
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// An owned exact sampler for reference expectations, resolved from the
/// target family.
pub enum ExactReference {
    /// Gaussian eigenbasis route (handled natively by the slope API).
    Gaussian,
    Sampler(Box<dyn StateSampler>),
}

/// Resolves a reference spec against a built target. `Exact` requires a
/// family with an exact sampling route.
pub fn resolve_reference(
    built: &BuiltPotential,
    spec: &ReferenceSpec,
) -> Result<Option<ExactReference>, CliError> {
    match spec {
        ReferenceSpec::Mala { .. } => Ok(None),
        ReferenceSpec::Exact => match built {
            BuiltPotential::Gaussian(_) => Ok(Some(ExactReference::Gaussian)),
            BuiltPotential::Product(p) => ProductSampler::new(p)
                .map(|s| Some(ExactReference::Sampler(Box::new(s))))
                .map_err(|e| {
                    CliError::Config(format!(
                        "exact reference unavailable for this product family ({e}); use a mala reference"
                    ))
                }),
            BuiltPotential::Rotated(p) => RotatedSampler::new(p)
                .map(|s| Some(ExactReference::Sampler(Box::new(s) as Box<dyn StateSampler>)))
                .map_err(map_sampler),
            BuiltPotential::Lattice(_) => Err(CliError::Config(
                "the lattice family has no exact sampler; use a mala reference".into(),
            )),
        },
    }
}

/// Slope-reference view over a resolved reference.
pub fn slope_reference<'a>(
    resolved: &'a Option<ExactReference>,
    spec: &ReferenceSpec,
) -> deloc_core::asymptotics::SlopeReference<'a> {
    use deloc_core::asymptotics::SlopeReference;
    match (resolved, spec) {
        (Some(ExactReference::Gaussian), _) => SlopeReference::ExactGaussian,
        (Some(ExactReference::Sampler(s)), _) => SlopeReference::Exact(s.as_ref()),
        (None, ReferenceSpec::Mala { h }) => SlopeReference::Mala { h: *h },
        (None, ReferenceSpec::Exact) => unreachable!("exact reference resolves to Some"),
    }
}

/// Log-log regression of `y` on `x`, dropping non-positive points.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<deloc_core::stats::LineFit> {
    let pairs: (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .unzip();
    deloc_core::stats::ols_line(&pairs.0, &pairs.1)
}

/// Validates the standing step-size window `0 < h <= 1/beta` up front so
/// misconfigured sweeps fail before any long run starts.
pub fn check_step(h: f64, p: &dyn Potential) -> Result<(), CliError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::Config(format!("step size must be positive, got {h}")));
    }
    if h > 1.0 / p.beta() {
        return Err(CliError::Config(format!(
            "step size {h} exceeds 1/beta = {} for this target",
            1.0 / p.beta()
        )));
    }
    Ok(())
}
