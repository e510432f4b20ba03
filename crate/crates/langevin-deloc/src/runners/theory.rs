//! `theory-bounds`: the multi-step bias bound (optimized and at a fixed
//! step count), the feasibility curve over `N`, the product-case reference
//! value, and an optional propagator-norm check.

use deloc_core::theory_bounds::{
    bias_bound, bias_bound_optimized, contraction, n_search_cap, product_bias_bound,
    propagator_check, BiasOutcome, BoundInputs, PointMode,
};
use serde_json::{json, Value};

use crate::config::{CliError, PointModeSpec, TheoryBoundsConfig};
use crate::output::{
    col, csv_column, fmt_f64, fmt_flag, fmt_opt, fmt_usize, read_csv, to_json, write_csv,
    write_summary, ColumnMeta, OutPaths,
};
use crate::plot::{Chart, Series};

use super::{map_theory, point_seed, profile_for_bounds};

const COLUMNS: &[ColumnMeta] = &[
    col("n", "coordinate"),
    col("contraction", "formula"),
    col("feasible", "flag"),
    col("bias_bound", "formula"),
];

/// At most this many curve rows; longer ranges are subsampled
/// geometrically.
const MAX_CURVE_ROWS: usize = 512;

pub fn run(cfg: &TheoryBoundsConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    let graph = cfg.graph.build()?;
    let d = graph.d();
    let profile = profile_for_bounds(&graph, cfg.alpha, cfg.beta, cfg.h, cfg.n_steps)?;
    let inputs = BoundInputs::new(cfg.alpha, cfg.beta, cfg.h, d, profile, cfg.grad_inf_sq)
        .map_err(map_theory)?;

    let report = bias_bound_optimized(&inputs).map_err(map_theory)?;
    let fixed = cfg
        .n_steps
        .map(|n| bias_bound(&inputs, n).map_err(map_theory))
        .transpose()?;
    // a fixed step count overrides the optimizer's verdict
    let feasible = match &fixed {
        Some(outcome) => matches!(outcome, BiasOutcome::Feasible { .. }),
        None => report.feasible,
    };
    let product_reference = product_bias_bound(cfg.alpha, cfg.beta, cfg.h, d).ok();
    let propagator = match &cfg.propagator {
        Some(spec) => {
            let built = spec.potential.build()?;
            let mode = match spec.mode {
                PointModeSpec::Stationary => PointMode::Stationary,
                PointModeSpec::Random { spread } => PointMode::Random { spread },
            };
            Some(
                propagator_check(
                    built.as_dyn(),
                    cfg.h,
                    spec.n_steps,
                    spec.n_trials,
                    mode,
                    point_seed(cfg.seed, 0, 0),
                )
                .map_err(map_theory)?,
            )
        }
        None => None,
    };

    let mut rows = Vec::new();
    for n in curve_grid(n_search_cap(&inputs), cfg.n_steps) {
        let c = contraction(&inputs, n).map_err(map_theory)?;
        let value = bias_bound(&inputs, n).map_err(map_theory)?.value();
        rows.push(vec![
            fmt_usize(n),
            fmt_f64(c),
            fmt_flag(c < 1.0),
            fmt_opt(value),
        ]);
    }
    write_csv(&out.results_csv(), COLUMNS, &rows)?;

    let fixed_json = fixed.map(|outcome| match outcome {
        BiasOutcome::Feasible { value } => json!({
            "n": cfg.n_steps,
            "feasible": true,
            "bias_bound": value,
        }),
        BiasOutcome::Infeasible { contraction } => json!({
            "n": cfg.n_steps,
            "feasible": false,
            "contraction": contraction,
        }),
    });
    let results = json!({
        "d": d,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "h": cfg.h,
        "grad_inf_sq_used": inputs.grad_inf_sq,
        "feasible": feasible,
        "optimized": to_json(&report),
        "fixed": fixed_json,
        "product_case_reference": product_reference.as_ref().map(to_json),
        "propagator": propagator.as_ref().map(to_json),
    });
    write_summary(
        &out.summary_json(),
        "theory_bounds",
        cfg.seed,
        echo,
        COLUMNS,
        results,
    )?;

    plot_curves(out)
}

/// All step counts up to the cap when few, otherwise a geometric
/// subsample; a fixed `n` is always included.
fn curve_grid(cap: usize, fixed: Option<usize>) -> Vec<usize> {
    let mut grid: Vec<usize> = if cap <= MAX_CURVE_ROWS {
        (1..=cap).collect()
    } else {
        let m = MAX_CURVE_ROWS as f64;
        let mut g: Vec<usize> = (0..MAX_CURVE_ROWS)
            .map(|j| {
                ((cap as f64).powf(j as f64 / (m - 1.0)).round() as usize).clamp(1, cap)
            })
            .collect();
        g.dedup();
        g
    };
    if let Some(n) = fixed {
        if n >= 1 && !grid.contains(&n) {
            grid.push(n);
        }
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

fn plot_curves(out: &OutPaths) -> Result<(), CliError> {
    let (header, rows) = read_csv(&out.results_csv())?;
    let ns = csv_column(&header, &rows, "n").unwrap_or_default();
    let bounds = csv_column(&header, &rows, "bias_bound").unwrap_or_default();
    let contractions = csv_column(&header, &rows, "contraction").unwrap_or_default();

    // infeasible rows have empty bound cells, parsed as NaN and dropped
    let mut bound_chart = Chart::new(
        "Bias bound against step count",
        "steps N",
        "max-norm bias bound",
    )
    .log_log();
    bound_chart.push(Series::new("bound", ns.clone(), bounds));
    bound_chart.write(&out.plot("bound_vs_n.svg"))?;

    let mut contraction_chart = Chart::new(
        "Contraction factor against step count",
        "steps N",
        "2 q^N sqrt(s_rN)",
    );
    contraction_chart.log_y = true;
    contraction_chart.push(Series::new("contraction", ns, contractions));
    contraction_chart.write(&out.plot("contraction_vs_n.svg"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GraphSpec;
    use tempfile::tempdir;

    fn base_config() -> TheoryBoundsConfig {
        TheoryBoundsConfig {
            graph: GraphSpec::Path { d: 16 },
            alpha: 1.0,
            beta: 5.0,
            h: 0.05,
            n_steps: None,
            grad_inf_sq: None,
            propagator: None,
            seed: 1,
            out_dir: None,
        }
    }

    #[test]
    fn curve_grid_is_sorted_unique_and_contains_fixed_n() {
        let g = curve_grid(10_000, Some(777));
        assert!(g.len() <= MAX_CURVE_ROWS + 1);
        assert!(g.contains(&1) && g.contains(&777) && g.contains(&10_000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(curve_grid(5, None), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn path_graph_report_is_feasible_and_plotted() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        run(&base_config(), json!({}), &out).unwrap();
        let summary: Value =
            serde_json::from_str(&std::fs::read_to_string(out.summary_json()).unwrap()).unwrap();
        assert_eq!(summary["results"]["feasible"], true);
        assert!(summary["results"]["optimized"]["bias"].as_f64().unwrap() > 0.0);
        assert!(out.plot("bound_vs_n.svg").exists());
        assert!(out.plot("contraction_vs_n.svg").exists());
    }

    #[test]
    fn fixed_small_n_on_complete_graph_is_infeasible() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let cfg = TheoryBoundsConfig {
            graph: GraphSpec::Complete { d: 100 },
            alpha: 1.0,
            beta: 1.0,
            h: 0.01,
            n_steps: Some(250),
            grad_inf_sq: None,
            propagator: None,
            seed: 1,
            out_dir: None,
        };
        run(&cfg, json!({}), &out).unwrap();
        let summary: Value =
            serde_json::from_str(&std::fs::read_to_string(out.summary_json()).unwrap()).unwrap();
        assert_eq!(summary["results"]["feasible"], false);
        assert_eq!(summary["results"]["fixed"]["feasible"], false);
        // the optimizer still finds a feasible larger N
        assert_eq!(summary["results"]["optimized"]["feasible"], true);
    }
}
