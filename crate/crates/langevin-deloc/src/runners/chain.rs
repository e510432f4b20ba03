//! `run-chain`: one (possibly multi-chain) sampler run with per-coordinate
//! moment summaries and an optional covariance matrix.

use deloc_core::samplers::{mala_chain, run_chain, Init, RunOptions, StepConfig};
use serde_json::{json, Value};

use crate::config::{Algorithm, CliError, RunChainConfig};
use crate::output::{
    col, csv_column, fmt_f64, fmt_usize, read_csv, write_csv, write_summary, ColumnMeta, OutPaths,
};
use crate::plot::{Chart, Series};

use super::{check_step, map_sampler};

// covariance storage and accumulation are quadratic in d
const COVARIANCE_DIM_CAP: usize = 128;

const COLUMNS: &[ColumnMeta] = &[
    col("coord", "coordinate"),
    col("mean", "measured"),
    col("mean_stderr", "stderr"),
    col("variance", "measured"),
    col("variance_stderr", "stderr"),
];

pub fn run(cfg: &RunChainConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    let built = cfg.potential.build()?;
    let p = built.as_dyn();
    let d = p.dim();
    check_step(cfg.h, p)?;
    if cfg.track_covariance && d > COVARIANCE_DIM_CAP {
        return Err(CliError::Config(format!(
            "track_covariance is quadratic in the dimension and limited to d <= {COVARIANCE_DIM_CAP}, got d = {d}"
        )));
    }

    let burn = cfg
        .burn_in
        .unwrap_or_else(|| StepConfig::default_burn_in(p.alpha(), cfg.h));
    let step = super::step_config(cfg.h, cfg.n_steps, burn, cfg.seed, cfg.n_chains);
    let opts = RunOptions {
        thin: None,
        track_covariance: cfg.track_covariance,
    };
    let init = Init::Point(vec![0.0; d]);
    let chain = match cfg.algorithm {
        Algorithm::Ula => run_chain(p, &step, &init, &opts),
        Algorithm::Mala => mala_chain(p, &step, &init, &opts),
    }
    .map_err(map_sampler)?;

    let rows: Vec<Vec<String>> = (0..d)
        .map(|i| {
            vec![
                fmt_usize(i),
                fmt_f64(chain.coord_mean(i)),
                fmt_f64(chain.coord_mean_stderr(i)),
                fmt_f64(chain.coord_variance(i)),
                fmt_f64(chain.coord_variance_stderr(i)),
            ]
        })
        .collect();
    write_csv(&out.results_csv(), COLUMNS, &rows)?;

    // average variance with its stderr combined in quadrature
    let var_mean = (0..d).map(|i| chain.coord_variance(i)).sum::<f64>() / d as f64;
    let var_mean_se = (0..d)
        .map(|i| chain.coord_variance_stderr(i).powi(2))
        .sum::<f64>()
        .sqrt()
        / d as f64;
    let covariance = chain.covariance().map(|m| {
        let rows: Vec<Vec<f64>> = (0..d).map(|i| m[i * d..(i + 1) * d].to_vec()).collect();
        json!({ "order": "row_major", "matrix": rows })
    });
    let results = json!({
        "d": d,
        "potential": cfg.potential.label(),
        "algorithm": algorithm_name(cfg.algorithm),
        "h": cfg.h,
        "burn_in": burn,
        "n_chains": cfg.n_chains,
        "n_samples": chain.n_samples(),
        "coord_variance_mean": var_mean,
        "coord_variance_mean_stderr": var_mean_se,
        "covariance": covariance,
        "diagnostics": {
            "max_grad_inf": chain.max_grad_inf,
            "acceptance_rate": chain.acceptance_rate,
            "warnings": chain.warnings,
        },
    });
    write_summary(
        &out.summary_json(),
        "run_chain",
        cfg.seed,
        echo,
        COLUMNS,
        results,
    )?;

    plot_variances(out)
}

pub fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Ula => "ula",
        Algorithm::Mala => "mala",
    }
}

// rebuilt from the emitted CSV so the plot stays regenerable from it
fn plot_variances(out: &OutPaths) -> Result<(), CliError> {
    let (header, rows) = read_csv(&out.results_csv())?;
    let coords = csv_column(&header, &rows, "coord").unwrap_or_default();
    let vars = csv_column(&header, &rows, "variance").unwrap_or_default();
    let ses = csv_column(&header, &rows, "variance_stderr").unwrap_or_default();
    let mut chart = Chart::new(
        "Per-coordinate variance",
        "coordinate",
        "empirical variance",
    );
    chart.push(Series::new("variance", coords, vars).with_se(ses));
    chart.write(&out.plot("variance_by_coordinate.svg"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PotentialSpec;
    use tempfile::tempdir;

    fn small_config() -> RunChainConfig {
        RunChainConfig {
            potential: PotentialSpec::GaussianIdentity {
                d: 3,
                curvature: 1.0,
            },
            algorithm: Algorithm::Ula,
            h: 0.1,
            n_steps: 4_000,
            burn_in: Some(500),
            n_chains: 2,
            track_covariance: true,
            seed: 7,
            out_dir: None,
        }
    }

    #[test]
    fn writes_csv_summary_and_plot() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        run(&small_config(), json!({}), &out).unwrap();
        let (header, rows) = read_csv(&out.results_csv()).unwrap();
        assert_eq!(header[0], "coord");
        assert_eq!(rows.len(), 3);
        let summary: Value =
            serde_json::from_str(&std::fs::read_to_string(out.summary_json()).unwrap()).unwrap();
        assert_eq!(summary["experiment"], "run_chain");
        assert_eq!(summary["results"]["d"], 3);
        assert!(summary["results"]["covariance"]["matrix"].is_array());
        assert!(out.plot("variance_by_coordinate.svg").exists());
    }

    #[test]
    fn covariance_request_rejected_in_high_dimension() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let mut cfg = small_config();
        cfg.potential = PotentialSpec::GaussianIdentity {
            d: 200,
            curvature: 1.0,
        };
        match run(&cfg, json!({}), &out) {
            Err(CliError::Config(m)) => assert!(m.contains("track_covariance")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let o1 = OutPaths::create(d1.path()).unwrap();
        let o2 = OutPaths::create(d2.path()).unwrap();
        run(&small_config(), json!({}), &o1).unwrap();
        run(&small_config(), json!({}), &o2).unwrap();
        let a = std::fs::read(o1.results_csv()).unwrap();
        let b = std::fs::read(o2.results_csv()).unwrap();
        assert_eq!(a, b);
    }
}
