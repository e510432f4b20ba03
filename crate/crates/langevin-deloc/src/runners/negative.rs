//! `negative-example`: the rotated-mixture family on which the bias
//! concentrates instead of delocalizing. The first coordinate of the
//! rotated chain carries `sqrt(d)` times the scalar mixture's step bias
//! `delta` exactly, because the rotation conjugates an i.i.d. product
//! chain; the runner measures `delta` once in one dimension and compares
//! every rotated run against the prediction.

use deloc_core::potentials::mixture_1d_stats;
use deloc_core::samplers::{run_chain, ChainRun, Init, RunOptions, StepConfig};
use serde_json::{json, Value};

use crate::config::{CliError, NegativeExampleConfig, PotentialSpec};
use crate::output::{
    col, csv_column, fmt_f64, fmt_usize, read_csv, write_csv, write_summary, ColumnMeta, OutPaths,
};
use crate::plot::{Chart, Series};

use super::{check_step, loglog_fit, map_sampler, point_seed};

const COLUMNS: &[ColumnMeta] = &[
    col("d", "coordinate"),
    col("n_retained", "coordinate"),
    col("bias_first", "measured"),
    col("bias_first_stderr", "stderr"),
    col("predicted_bias", "measured"),
    col("predicted_bias_stderr", "stderr"),
    col("ratio", "measured"),
    col("ratio_stderr", "stderr"),
    col("w1_lower", "measured"),
    col("w1_lower_stderr", "stderr"),
    col("w1_argmax", "coordinate"),
];

struct DimRow {
    d: usize,
    n_retained: usize,
    bias_first: f64,
    bias_first_stderr: f64,
    predicted: f64,
    predicted_stderr: f64,
    ratio: f64,
    ratio_stderr: f64,
    w1_lower: f64,
    w1_lower_stderr: f64,
    w1_argmax: usize,
}

pub fn run(cfg: &NegativeExampleConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    if cfg.d_list.is_empty() {
        return Err(CliError::Config("d_list must not be empty".into()));
    }
    if let Some(per_d) = &cfg.n_steps_per_d {
        if per_d.len() != cfg.d_list.len() {
            return Err(CliError::Config(format!(
                "n_steps_per_d has {} entries for {} dimensions",
                per_d.len(),
                cfg.d_list.len()
            )));
        }
    }
    let stats = mixture_1d_stats(cfg.p, cfg.mu1, cfg.mu2)
        .map_err(|e| CliError::Config(format!("at /p: invalid mixture: {e}")))?;
    let m_mix = stats.mean;

    // scalar step bias delta, measured once in one dimension
    let scalar = run_rotated(cfg, 1, cfg.n_steps_delta, point_seed(cfg.seed, 0, 0))?;
    let delta = scalar.coord_mean(0) - m_mix;
    let delta_se = scalar.coord_mean_stderr(0);
    let inconclusive = delta.abs() < 3.0 * delta_se;

    let mut rows = Vec::new();
    for (i, &d) in cfg.d_list.iter().enumerate() {
        let n = cfg
            .n_steps_per_d
            .as_ref()
            .map_or(cfg.n_steps, |per_d| per_d[i]);
        let row = if d == 1 {
            // the rotation is the identity in one dimension, so the scalar
            // run is the measurement and the ratio is one by construction
            DimRow {
                d: 1,
                n_retained: cfg.n_steps_delta,
                bias_first: delta,
                bias_first_stderr: delta_se,
                predicted: delta,
                predicted_stderr: delta_se,
                ratio: 1.0,
                ratio_stderr: 0.0,
                w1_lower: delta.abs(),
                w1_lower_stderr: delta_se,
                w1_argmax: 0,
            }
        } else {
            let chain = run_rotated(cfg, d, n, point_seed(cfg.seed, i + 1, 0))?;
            let sqrt_d = (d as f64).sqrt();
            // target mean is m_mix sqrt(d) on the first coordinate, zero
            // elsewhere (exact under the Householder rotation)
            let bias_first = chain.coord_mean(0) - m_mix * sqrt_d;
            let bias_first_se = chain.coord_mean_stderr(0);
            let predicted = sqrt_d * delta;
            let predicted_se = sqrt_d * delta_se;
            let ratio = bias_first / predicted;
            let ratio_se = ratio.abs()
                * ((bias_first_se / bias_first).powi(2) + (delta_se / delta).powi(2)).sqrt();

            let mut w1 = 0.0;
            let mut argmax = 0;
            for j in 0..d {
                let target = if j == 0 { m_mix * sqrt_d } else { 0.0 };
                let dev = (chain.coord_mean(j) - target).abs();
                if dev > w1 {
                    w1 = dev;
                    argmax = j;
                }
            }
            DimRow {
                d,
                n_retained: n,
                bias_first,
                bias_first_stderr: bias_first_se,
                predicted,
                predicted_stderr: predicted_se,
                ratio,
                ratio_stderr: ratio_se,
                w1_lower: w1,
                w1_lower_stderr: chain.coord_mean_stderr(argmax),
                w1_argmax: argmax,
            }
        };
        rows.push(row);
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_usize(r.d),
                fmt_usize(r.n_retained),
                fmt_f64(r.bias_first),
                fmt_f64(r.bias_first_stderr),
                fmt_f64(r.predicted),
                fmt_f64(r.predicted_stderr),
                fmt_f64(r.ratio),
                fmt_f64(r.ratio_stderr),
                fmt_f64(r.w1_lower),
                fmt_f64(r.w1_lower_stderr),
                fmt_usize(r.w1_argmax),
            ]
        })
        .collect();
    write_csv(&out.results_csv(), COLUMNS, &csv_rows)?;

    let ds: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let w1_fit = loglog_fit(&ds, &rows.iter().map(|r| r.w1_lower).collect::<Vec<_>>());
    let bias_fit = loglog_fit(&ds, &rows.iter().map(|r| r.bias_first.abs()).collect::<Vec<_>>());
    let ratio_max_dev = rows
        .iter()
        .map(|r| (r.ratio - 1.0).abs())
        .fold(0.0f64, f64::max);
    let fit_json = |f: Option<deloc_core::stats::LineFit>| match f {
        Some(f) => json!({ "slope": f.slope, "slope_stderr": f.slope_stderr }),
        None => Value::Null,
    };
    let results = json!({
        "mixture": { "p": cfg.p, "mu1": cfg.mu1, "mu2": cfg.mu2,
                     "mean": m_mix, "variance": stats.variance,
                     "convexity_margin": stats.convexity_margin },
        "h": cfg.h,
        "delta": { "value": delta, "stderr": delta_se, "inconclusive": inconclusive },
        "ratio_max_abs_dev": ratio_max_dev,
        "w1_growth": fit_json(w1_fit),
        "bias_first_growth": fit_json(bias_fit),
    });
    write_summary(
        &out.summary_json(),
        "negative_example",
        cfg.seed,
        echo,
        COLUMNS,
        results,
    )?;

    plot_growth(out)
}

fn run_rotated(
    cfg: &NegativeExampleConfig,
    d: usize,
    retained: usize,
    seed: u64,
) -> Result<ChainRun, CliError> {
    let built = PotentialSpec::RotatedMixture {
        d,
        p: cfg.p,
        mu1: cfg.mu1,
        mu2: cfg.mu2,
    }
    .build()?;
    let p = built.as_dyn();
    check_step(cfg.h, p)?;
    let burn = cfg
        .burn_in
        .unwrap_or_else(|| StepConfig::default_burn_in(p.alpha(), cfg.h));
    let step = super::step_config(cfg.h, retained, burn, seed, 1);
    run_chain(
        p,
        &step,
        &Init::Point(vec![0.0; d]),
        &RunOptions::default(),
    )
    .map_err(map_sampler)
}

fn plot_growth(out: &OutPaths) -> Result<(), CliError> {
    let (header, rows) = read_csv(&out.results_csv())?;
    let pick = |name: &str| csv_column(&header, &rows, name).unwrap_or_default();
    let ds = pick("d");
    let abs_of = |v: Vec<f64>| v.into_iter().map(f64::abs).collect::<Vec<_>>();
    let mut chart = Chart::new(
        "First-coordinate bias against dimension",
        "dimension d",
        "|bias|",
    )
    .log_log();
    chart.push(
        Series::new("measured", ds.clone(), abs_of(pick("bias_first")))
            .with_se(pick("bias_first_stderr")),
    );
    chart.push(
        Series::new("sqrt(d) * delta", ds.clone(), abs_of(pick("predicted_bias")))
            .with_se(pick("predicted_bias_stderr")),
    );
    chart.push(Series::new("W1 marginal lower", ds, pick("w1_lower")).with_se(pick("w1_lower_stderr")));
    chart.write(&out.plot("bias_vs_d.svg"))
}
