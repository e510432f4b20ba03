//! Cross-module flows: chains against closed-form stationary laws, sample
//! brackets against exact distances, and theory bounds against measurements.

use deloc_core::asymptotics::{first_order_slope, ObservableSpec, SlopeReference};
use deloc_core::metrics::{
    gaussian_bias_bracket, observable_bias, w2_linf_lower, w2_linf_upper_gaussian,
    EmpiricalSamples, ObservableSpec as SampleObservable, Provenance,
};
use deloc_core::potentials::{
    tridiagonal_example, GaussianPotential, LambdaSpec, Potential, ProductPotential,
};
use deloc_core::samplers::{
    chain_rng, run_chain, GaussianSampler, Init, ProductSampler, RunOptions, StateSampler,
    StepConfig,
};
use deloc_core::theory_bounds::{bias_bound_optimized, propagator_check, BoundInputs, PointMode};

// stationary variance factor of the unadjusted chain: 1 / (a (1 - h a / 2))
fn biased_variance(a: f64, h: f64) -> f64 {
    1.0 / (a * (1.0 - h * a / 2.0))
}

fn ula_samples(
    p: &dyn Potential,
    h: f64,
    retained: usize,
    burn: usize,
    thin: usize,
    seed: u64,
) -> EmpiricalSamples {
    let step = StepConfig::new(h, burn + retained, burn, seed, 1);
    let opts = RunOptions {
        thin: Some(thin),
        track_covariance: false,
    };
    let chain = run_chain(p, &step, &Init::Point(vec![0.0; p.dim()]), &opts).unwrap();
    EmpiricalSamples::from_thinned(chain.thinned.unwrap(), Provenance::new("ula", seed)).unwrap()
}

fn exact_rows(s: &dyn StateSampler, n: usize, seed: u64) -> EmpiricalSamples {
    let d = s.dim();
    let mut rng = chain_rng(seed, 0);
    let mut data = vec![0.0; n * d];
    for r in 0..n {
        s.sample_into(&mut rng, &mut data[r * d..(r + 1) * d]);
    }
    EmpiricalSamples::new(n, d, data, Provenance::new("exact", seed)).unwrap()
}

#[test]
fn biased_chain_moments_match_the_closed_form_stationary_law() {
    let p = GaussianPotential::free_field(8, 1.0).unwrap();
    let h = 0.05;
    let step = StepConfig::new(h, 5_000 + 200_000, 5_000, 41, 1);
    let opts = RunOptions {
        thin: None,
        track_covariance: false,
    };
    let chain = run_chain(&p, &step, &Init::Point(vec![0.0; 8]), &opts).unwrap();

    let sigma_inf = p.sigma_inf_dense(h).unwrap();
    for i in 0..8 {
        let mean = chain.coord_mean(i);
        let mean_se = chain.coord_mean_stderr(i);
        assert!(mean.abs() <= 5.0 * mean_se, "coord {i}: mean {mean} vs se {mean_se}");
        let var = chain.coord_variance(i);
        let var_se = chain.coord_variance_stderr(i);
        let target = sigma_inf[(i, i)];
        assert!(
            (var - target).abs() <= 5.0 * var_se,
            "coord {i}: variance {var} vs closed form {target} (se {var_se})"
        );
    }
}

#[test]
fn exact_sampler_bracket_traps_the_marginal_gaussian_distance() {
    let p = GaussianPotential::scaled_identity(4, 1.0).unwrap();
    let h = 0.1;
    // every marginal moves by the same amount, the scalar biased-variance gap
    let marginal = biased_variance(1.0, h).sqrt() - 1.0;

    let bracket = gaussian_bias_bracket(&p, h, 40_000, 40_000, 17).unwrap();
    assert!(bracket.consistent(), "{bracket:?}");
    assert!(
        bracket.lower >= 0.3 * marginal && bracket.lower <= 2.0 * marginal,
        "lower {} vs marginal distance {marginal}",
        bracket.lower
    );
    // the coupling upper must clear the exact marginal distance, and the
    // max over four identical coordinates cannot exceed its union envelope
    assert!(bracket.upper + 3.0 * bracket.upper_stderr >= marginal);
    assert!(bracket.upper <= marginal * (2.0 * (2.0 * 4.0f64).ln()).sqrt() + 3.0 * bracket.upper_stderr);
}

#[test]
fn optimized_theory_bound_dominates_the_measured_distance() {
    let p = GaussianPotential::free_field(16, 1.0).unwrap();
    let h = 0.02;
    let profile = p.graph().sparsity_profile(16).unwrap();
    let inputs = BoundInputs::new(p.alpha(), p.beta(), h, 16, profile, None).unwrap();
    let report = bias_bound_optimized(&inputs).unwrap();
    assert!(report.feasible);
    let bound = report.bias.unwrap();

    let measured = w2_linf_upper_gaussian(&p, h, 20_000, 23).unwrap();
    assert!(
        bound >= measured.value + 3.0 * measured.stderr,
        "bound {bound} vs measured upper {}",
        measured.value
    );
}

#[test]
fn integral_slope_formulas_predict_the_measured_chain_bias() {
    let p = ProductPotential::standard_gaussian(4);
    let sampler = ProductSampler::new(&p).unwrap();
    let f = ObservableSpec::quadratic_diag(&[1.0, 0.0, 0.0, 0.0]);
    let report = first_order_slope(
        &p,
        &f,
        50_000,
        31,
        &SlopeReference::Exact(&sampler),
    )
    .unwrap();
    // the divergence-form estimator is exact here; the gradient form agrees
    assert!((report.slope_formula_b + 0.5).abs() < 1e-9);
    assert!(
        (report.slope_formula_a - report.slope_formula_b).abs()
            <= 3.0 * report.stderr_diff + 1e-12
    );

    // measured bias of E[x_0^2] at a concrete step size
    let h = 0.1;
    let chain = ula_samples(&p, h, 600_000, 10_000, 5, 37);
    let reference = exact_rows(&sampler, 150_000, 39);
    let measured = observable_bias(
        &SampleObservable::Quadratic {
            terms: vec![(0, 0, 1.0)],
        },
        &reference,
        &chain,
    )
    .unwrap();

    let exact = 1.0 - biased_variance(1.0, h);
    assert!(
        (measured.estimate - exact).abs() <= 4.0 * measured.stderr,
        "measured {} vs exact {exact} (se {})",
        measured.estimate,
        measured.stderr
    );
    // first-order prediction h * slope, with room for the O(h^2) remainder
    let predicted = h * report.slope_formula_b;
    assert!((measured.estimate - predicted).abs() <= 4.0 * measured.stderr + 0.01);
    assert!(measured.estimate < 0.0);
}

#[test]
fn propagator_bounds_hold_on_the_quartic_lattice() {
    let p = tridiagonal_example(16, LambdaSpec::QuarticVar { alpha: 1.0, c: 0.5 }).unwrap();
    let h = 0.01 / p.beta();
    let report = propagator_check(&p, h, 50, 20, PointMode::Random { spread: 1.0 }, 29).unwrap();
    assert!(report.all_ok(), "{report:?}");
    assert!(report.violations.is_empty());
    assert!(report.min_ratio_p >= 1.0 && report.min_ratio_j >= 1.0);
}

#[test]
fn marginal_lower_bound_locates_the_stiffest_coordinate() {
    let precisions = vec![0.25, 1.0, 4.0];
    let g = GaussianPotential::diagonal(vec![0.0; 3], precisions.clone()).unwrap();
    let h = 0.2; // inside the validity window: 1/beta = 0.25

    let target = GaussianSampler::target(&g);
    let reference = exact_rows(&target, 60_000, 43);
    let chain = ula_samples(&g, h, 240_000, 5_000, 4, 47);

    let lower = w2_linf_lower(&reference, &chain).unwrap();
    // the stiffest coordinate has the largest marginal distance
    let dist: Vec<f64> = precisions
        .iter()
        .map(|&a| biased_variance(a, h).sqrt() - (1.0 / a).sqrt())
        .collect();
    assert_eq!(lower.argmax_coord, 2);
    assert!(lower.per_coord_w2[2] > lower.per_coord_w2[1]);
    assert!(lower.per_coord_w2[1] > lower.per_coord_w2[0]);
    assert!(
        (lower.w2_lower - dist[2]).abs() <= 0.3 * dist[2],
        "lower {} vs exact marginal {}",
        lower.w2_lower,
        dist[2]
    );

    let upper = w2_linf_upper_gaussian(&g, h, 30_000, 53).unwrap();
    assert!(upper.value + 3.0 * upper.stderr >= lower.w2_lower - 3.0 * lower.w2_lower_stderr);
}
