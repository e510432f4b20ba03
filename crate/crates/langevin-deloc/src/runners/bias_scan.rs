//! `bias-scan`: the delocalization scan. For every `(d, h)` point it
//! brackets the stationary max-norm Wasserstein bias from below (exact
//! Gaussian marginals or sampled marginals), from above (coupling gap
//! moments and, on Gaussians, the matrix-root coupling), and evaluates the
//! multi-step theory bound, then regresses each bracket side against the
//! dimension per step size.

use deloc_core::metrics::{
    w2_linf_lower, w2_linf_upper_gaussian, EmpiricalSamples, Provenance,
};
use deloc_core::samplers::{
    chain_rng, coupled_bias_run, mala_chain, run_chain, CoupledInit, CoupledOptions,
    CouplingReference, Init, ProductSampler, RotatedSampler, RunOptions, StateSampler, StepConfig,
};
use deloc_core::theory_bounds::{bias_bound_optimized, product_bias_bound, BoundInputs};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{BiasScanConfig, BuiltPotential, CliError};
use crate::output::{
    col, csv_column, fmt_f64, fmt_flag, fmt_opt, fmt_usize, read_csv, write_csv, write_summary,
    ColumnMeta, OutPaths,
};
use crate::plot::{Chart, Series};

use super::{check_step, gap_burn_in, loglog_fit, map_metrics, map_sampler, map_theory, point_seed};

const COLUMNS: &[ColumnMeta] = &[
    col("d", "coordinate"),
    col("h", "coordinate"),
    col("alpha", "formula"),
    col("beta", "formula"),
    col("lower_exact", "formula"),
    col("lower_sampled", "measured"),
    col("lower_sampled_stderr", "stderr"),
    col("gap_inf", "measured"),
    col("gap_inf_stderr", "stderr"),
    col("gap_l2", "measured"),
    col("gap_l2_stderr", "stderr"),
    col("upper", "measured"),
    col("upper_stderr", "stderr"),
    col("theory_feasible", "flag"),
    col("theory_bound", "formula"),
    col("theory_envelope", "formula"),
    col("product_bound", "formula"),
    col("n_gap_samples", "coordinate"),
];

/// One finished sweep point, already reduced to scalars.
struct PointOut {
    d: usize,
    h: f64,
    alpha: f64,
    beta: f64,
    lower_exact: Option<f64>,
    lower_sampled: Option<f64>,
    lower_sampled_stderr: Option<f64>,
    gap_inf: f64,
    gap_inf_stderr: f64,
    gap_l2: f64,
    gap_l2_stderr: f64,
    upper: Option<f64>,
    upper_stderr: Option<f64>,
    theory_feasible: bool,
    theory_bound: Option<f64>,
    theory_envelope: f64,
    product_bound: f64,
    n_gap_samples: usize,
}

pub fn run(cfg: &BiasScanConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    if cfg.d_list.is_empty() || cfg.h_list.is_empty() {
        return Err(CliError::Config(
            "d_list and h_list must each have at least one entry".into(),
        ));
    }
    // fail fast on the whole grid before any long run starts
    let mut points = Vec::new();
    for (i_d, &d) in cfg.d_list.iter().enumerate() {
        let spec = cfg.potential.with_dim(d)?;
        let built = spec.build()?;
        for (i_h, &h) in cfg.h_list.iter().enumerate() {
            check_step(h, built.as_dyn())?;
            let idx = i_d * cfg.h_list.len() + i_h;
            points.push((idx, d, h));
        }
    }

    let results: Result<Vec<PointOut>, CliError> = points
        .par_iter()
        .map(|&(idx, d, h)| run_point(cfg, idx, d, h))
        .collect();
    let results = results?;

    let rows: Vec<Vec<String>> = results.iter().map(csv_row).collect();
    write_csv(&out.results_csv(), COLUMNS, &rows)?;
    write_scan_summary(cfg, echo, out, &results)?;
    plot_scan(cfg, out)
}

fn run_point(cfg: &BiasScanConfig, idx: usize, d: usize, h: f64) -> Result<PointOut, CliError> {
    let built = cfg.potential.with_dim(d)?.build()?;
    let p = built.as_dyn();
    let (alpha, beta) = (p.alpha(), p.beta());

    // theory side, shared by both branches
    let graph = p.graph();
    let profile = super::profile_for_bounds(graph, alpha, beta, h, None)?;
    let inputs = BoundInputs::new(alpha, beta, h, d, profile, None).map_err(map_theory)?;
    let report = bias_bound_optimized(&inputs).map_err(map_theory)?;
    let product = product_bias_bound(alpha, beta, h, d).map_err(map_theory)?;

    let (coupled, lower_exact, lower_sampled, upper) = match &built {
        BuiltPotential::Gaussian(g) => {
            let burn = cfg.burn_in.unwrap_or_else(|| gap_burn_in(alpha, h));
            let step = StepConfig::new(
                h,
                burn + cfg.n_steps,
                burn,
                point_seed(cfg.seed, idx, 0),
                1,
            );
            let opts = CoupledOptions {
                init: CoupledInit::StationaryPair,
                gap_stride: cfg.gap_stride,
                thin: None,
            };
            let coupled =
                coupled_bias_run(p, &step, CouplingReference::ExactGaussian, &opts)
                    .map_err(map_sampler)?;

            // max over coordinates of the 1D Gaussian marginal distance
            let sigma = g.sigma_dense();
            let sigma_inf = g.sigma_inf_dense(h).map_err(|e| CliError::Config(e.to_string()))?;
            let lower = (0..d)
                .map(|i| (sigma_inf[(i, i)].sqrt() - sigma[(i, i)].sqrt()).abs())
                .fold(0.0f64, f64::max);

            let upper = if cfg.n_upper_mc > 0 {
                let u = w2_linf_upper_gaussian(g, h, cfg.n_upper_mc, point_seed(cfg.seed, idx, 1))
                    .map_err(map_metrics)?;
                Some((u.value, u.stderr))
            } else {
                None
            };
            (coupled, Some(lower), None, upper)
        }
        _ => {
            let burn = cfg
                .burn_in
                .unwrap_or_else(|| gap_burn_in(alpha, h).max(StepConfig::default_burn_in(alpha, h)));
            let sampler = exact_sampler(&built);
            let init = match &sampler {
                Some(s) => CoupledInit::SharedSample(s.as_ref()),
                None => CoupledInit::SharedPoint(vec![0.0; d]),
            };
            let step = StepConfig::new(
                h,
                burn + cfg.n_steps,
                burn,
                point_seed(cfg.seed, idx, 0),
                1,
            );
            let opts = CoupledOptions {
                init,
                gap_stride: cfg.gap_stride,
                thin: None,
            };
            let reference = CouplingReference::FineUla {
                substeps: cfg.substeps,
            };
            let coupled = coupled_bias_run(p, &step, reference, &opts).map_err(map_sampler)?;

            let lower = sampled_lower(cfg, &built, idx, d, h, burn)?;
            (coupled, None, Some(lower), None)
        }
    };

    Ok(PointOut {
        d,
        h,
        alpha,
        beta,
        lower_exact,
        lower_sampled: lower_sampled.map(|l| l.0),
        lower_sampled_stderr: lower_sampled.map(|l| l.1),
        gap_inf: coupled.gap_inf,
        gap_inf_stderr: coupled.gap_inf_stderr,
        gap_l2: coupled.gap_l2,
        gap_l2_stderr: coupled.gap_l2_stderr,
        upper: upper.map(|u| u.0),
        upper_stderr: upper.map(|u| u.1),
        theory_feasible: report.feasible,
        theory_bound: report.bias,
        theory_envelope: report.envelope,
        product_bound: product.value,
        n_gap_samples: coupled.n_gap_samples,
    })
}

fn exact_sampler(built: &BuiltPotential) -> Option<Box<dyn StateSampler>> {
    match built {
        BuiltPotential::Product(p) => ProductSampler::new(p)
            .ok()
            .map(|s| Box::new(s) as Box<dyn StateSampler>),
        BuiltPotential::Rotated(p) => RotatedSampler::new(p)
            .ok()
            .map(|s| Box::new(s) as Box<dyn StateSampler>),
        _ => None,
    }
}

/// Sampled marginal lower bound: reference draws (exact where available,
/// Metropolis-adjusted otherwise) against thinned unadjusted samples.
fn sampled_lower(
    cfg: &BiasScanConfig,
    built: &BuiltPotential,
    idx: usize,
    d: usize,
    h: f64,
    burn: usize,
) -> Result<(f64, f64), CliError> {
    let p = built.as_dyn();
    let thin = cfg.thin.max(1);
    let n_rows = (cfg.n_lower_samples).max(2);

    let reference = match exact_sampler(built) {
        Some(s) => {
            let mut rng = chain_rng(point_seed(cfg.seed, idx, 2), 0);
            let mut data = vec![0.0; n_rows * d];
            for r in 0..n_rows {
                s.sample_into(&mut rng, &mut data[r * d..(r + 1) * d]);
            }
            EmpiricalSamples::new(n_rows, d, data, Provenance::new("exact", 0))
                .map_err(map_metrics)?
        }
        None => {
            let step = StepConfig::new(
                h,
                burn + n_rows * thin,
                burn,
                point_seed(cfg.seed, idx, 3),
                1,
            );
            let opts = RunOptions {
                thin: Some(thin),
                track_covariance: false,
            };
            let chain = mala_chain(p, &step, &Init::Point(vec![0.0; d]), &opts)
                .map_err(map_sampler)?;
            let t = chain.thinned.expect("thin was requested");
            EmpiricalSamples::from_thinned(t, Provenance::new("mala", 0)).map_err(map_metrics)?
        }
    };

    let step = StepConfig::new(
        h,
        burn + n_rows * thin,
        burn,
        point_seed(cfg.seed, idx, 4),
        1,
    );
    let opts = RunOptions {
        thin: Some(thin),
        track_covariance: false,
    };
    let chain = run_chain(p, &step, &Init::Point(vec![0.0; d]), &opts).map_err(map_sampler)?;
    let t = chain.thinned.expect("thin was requested");
    let ula = EmpiricalSamples::from_thinned(t, Provenance::new("ula", 0)).map_err(map_metrics)?;

    let bound = w2_linf_lower(&reference, &ula).map_err(map_metrics)?;
    Ok((bound.w2_lower, bound.w2_lower_stderr))
}

fn csv_row(r: &PointOut) -> Vec<String> {
    vec![
        fmt_usize(r.d),
        fmt_f64(r.h),
        fmt_f64(r.alpha),
        fmt_f64(r.beta),
        fmt_opt(r.lower_exact),
        fmt_opt(r.lower_sampled),
        fmt_opt(r.lower_sampled_stderr),
        fmt_f64(r.gap_inf),
        fmt_f64(r.gap_inf_stderr),
        fmt_f64(r.gap_l2),
        fmt_f64(r.gap_l2_stderr),
        fmt_opt(r.upper),
        fmt_opt(r.upper_stderr),
        fmt_flag(r.theory_feasible),
        fmt_opt(r.theory_bound),
        fmt_f64(r.theory_envelope),
        fmt_f64(r.product_bound),
        fmt_usize(r.n_gap_samples),
    ]
}

fn write_scan_summary(
    cfg: &BiasScanConfig,
    echo: Value,
    out: &OutPaths,
    results: &[PointOut],
) -> Result<(), CliError> {
    // per-h growth exponents in d for every bracket side
    let mut regressions = Vec::new();
    for &h in &cfg.h_list {
        let at_h: Vec<&PointOut> = results.iter().filter(|r| r.h == h).collect();
        let ds: Vec<f64> = at_h.iter().map(|r| r.d as f64).collect();
        let fit_of = |ys: Vec<f64>| -> Value {
            match loglog_fit(&ds, &ys) {
                Some(f) => json!({ "slope": f.slope, "slope_stderr": f.slope_stderr }),
                None => Value::Null,
            }
        };
        let lower: Vec<f64> = at_h
            .iter()
            .map(|r| r.lower_exact.or(r.lower_sampled).unwrap_or(f64::NAN))
            .collect();
        regressions.push(json!({
            "h": h,
            "lower": fit_of(lower),
            "gap_inf": fit_of(at_h.iter().map(|r| r.gap_inf).collect()),
            "gap_l2": fit_of(at_h.iter().map(|r| r.gap_l2).collect()),
            "upper": fit_of(at_h.iter().map(|r| r.upper.unwrap_or(f64::NAN)).collect()),
            "theory_bound": fit_of(
                at_h.iter().map(|r| r.theory_bound.unwrap_or(f64::NAN)).collect()
            ),
        }));
    }

    // the theory bound must dominate the measured upper bracket
    let mut dominance_checked = 0usize;
    let mut dominance_violations = Vec::new();
    for r in results {
        if let (Some(bound), Some(upper)) = (r.theory_bound, r.upper) {
            dominance_checked += 1;
            let slack = 3.0 * r.upper_stderr.unwrap_or(0.0);
            if bound < upper - slack {
                dominance_violations.push(json!({
                    "d": r.d,
                    "h": r.h,
                    "theory_bound": bound,
                    "upper": upper,
                }));
            }
        }
    }

    let results_json = json!({
        "potential": cfg.potential.label(),
        "d_list": cfg.d_list,
        "h_list": cfg.h_list,
        "n_points": results.len(),
        "feasible_all": results.iter().all(|r| r.theory_feasible),
        "growth_in_d": regressions,
        "dominance": {
            "checked": dominance_checked,
            "violations": dominance_violations,
        },
    });
    write_summary(
        &out.summary_json(),
        "bias_scan",
        cfg.seed,
        echo,
        COLUMNS,
        results_json,
    )
}

fn plot_scan(cfg: &BiasScanConfig, out: &OutPaths) -> Result<(), CliError> {
    let (header, rows) = read_csv(&out.results_csv())?;
    let pick = |name: &str| csv_column(&header, &rows, name).unwrap_or_default();
    let (ds, hs) = (pick("d"), pick("h"));
    let series_defs: [(&str, Vec<f64>, Option<Vec<f64>>); 6] = [
        ("lower (exact)", pick("lower_exact"), None),
        (
            "lower (sampled)",
            pick("lower_sampled"),
            Some(pick("lower_sampled_stderr")),
        ),
        ("coupling gap (inf)", pick("gap_inf"), Some(pick("gap_inf_stderr"))),
        ("upper (coupling)", pick("upper"), Some(pick("upper_stderr"))),
        ("theory bound", pick("theory_bound"), None),
        ("product-case bound", pick("product_bound"), None),
    ];

    for &h in &cfg.h_list {
        let sel: Vec<usize> = (0..ds.len()).filter(|&i| hs[i] == h).collect();
        let xs: Vec<f64> = sel.iter().map(|&i| ds[i]).collect();
        let mut chart = Chart::new(
            format!("Bias brackets against dimension, h = {}", fmt_f64(h)),
            "dimension d",
            "max-norm W2",
        )
        .log_log();
        for (label, ys, se) in &series_defs {
            let y: Vec<f64> = sel.iter().map(|&i| ys[i]).collect();
            if y.iter().all(|v| v.is_nan()) {
                continue;
            }
            let mut s = Series::new(*label, xs.clone(), y);
            if let Some(se) = se {
                s = s.with_se(sel.iter().map(|&i| se[i]).collect());
            }
            chart.push(s);
        }
        chart.write(&out.plot(&format!("bias_vs_d_h{}.svg", fmt_f64(h))))?;
    }

    if cfg.h_list.len() >= 2 {
        for &d in &cfg.d_list {
            let sel: Vec<usize> = (0..ds.len()).filter(|&i| ds[i] == d as f64).collect();
            let xs: Vec<f64> = sel.iter().map(|&i| hs[i]).collect();
            let mut chart = Chart::new(
                format!("Bias brackets against step size, d = {d}"),
                "step size h",
                "max-norm W2",
            )
            .log_log();
            for (label, ys, se) in &series_defs {
                let y: Vec<f64> = sel.iter().map(|&i| ys[i]).collect();
                if y.iter().all(|v| v.is_nan()) {
                    continue;
                }
                let mut s = Series::new(*label, xs.clone(), y);
                if let Some(se) = se {
                    s = s.with_se(sel.iter().map(|&i| se[i]).collect());
                }
                chart.push(s);
            }
            chart.write(&out.plot(&format!("bias_vs_h_d{d}.svg")))?;
        }
    }
    Ok(())
}
