//! `coupling-estimate`: synchronous-coupling gap moments at one
//! configuration, plus the exact-sampler distance bracket on Gaussian
//! targets.

use deloc_core::metrics::gaussian_bias_bracket;
use deloc_core::samplers::{
    coupled_bias_run, CoupledInit, CoupledOptions, CouplingReference, ProductSampler, StateSampler,
    StepConfig,
};
use serde_json::{json, Value};

use crate::config::{BuiltPotential, CliError, CouplingEstimateConfig, CouplingReferenceSpec};
use crate::output::{
    col, fmt_f64, fmt_flag, fmt_opt, fmt_usize, to_json, write_csv, write_summary, ColumnMeta,
    OutPaths,
};

use super::{check_step, gap_burn_in, map_metrics, map_sampler, point_seed};

const COLUMNS: &[ColumnMeta] = &[
    col("d", "coordinate"),
    col("h", "coordinate"),
    col("gap_inf", "measured"),
    col("gap_inf_stderr", "stderr"),
    col("gap_l2", "measured"),
    col("gap_l2_stderr", "stderr"),
    col("n_gap_samples", "coordinate"),
    col("lower", "measured"),
    col("lower_stderr", "stderr"),
    col("upper", "measured"),
    col("upper_stderr", "stderr"),
    col("bracket_consistent", "flag"),
];

pub fn run(cfg: &CouplingEstimateConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    let built = cfg.potential.build()?;
    let p = built.as_dyn();
    let d = p.dim();
    check_step(cfg.h, p)?;

    let reference = match cfg.reference {
        CouplingReferenceSpec::ExactGaussian => {
            if built.as_gaussian().is_none() {
                return Err(CliError::Config(
                    "the exact_gaussian reference needs a Gaussian target; use fine_ula".into(),
                ));
            }
            CouplingReference::ExactGaussian
        }
        CouplingReferenceSpec::FineUla { substeps } => CouplingReference::FineUla { substeps },
    };

    // non-Gaussian pairs share their start; exactly-sampleable families
    // start in stationarity, the rest rely on burn-in from the origin
    let sampler;
    let (init, needs_marginal_burn) = if built.as_gaussian().is_some() {
        (CoupledInit::StationaryPair, false)
    } else if let BuiltPotential::Product(prod) = &built {
        match ProductSampler::new(prod) {
            Ok(s) => {
                sampler = s;
                (CoupledInit::SharedSample(&sampler as &dyn StateSampler), false)
            }
            Err(_) => (CoupledInit::SharedPoint(vec![0.0; d]), true),
        }
    } else {
        (CoupledInit::SharedPoint(vec![0.0; d]), true)
    };
    let mut burn = cfg.burn_in.unwrap_or_else(|| gap_burn_in(p.alpha(), cfg.h));
    if needs_marginal_burn && cfg.burn_in.is_none() {
        burn = burn.max(StepConfig::default_burn_in(p.alpha(), cfg.h));
    }

    let step = super::step_config(cfg.h, cfg.n_steps, burn, point_seed(cfg.seed, 0, 0), 1);
    let opts = CoupledOptions {
        init,
        gap_stride: cfg.gap_stride,
        thin: None,
    };
    let coupled = coupled_bias_run(p, &step, reference, &opts).map_err(map_sampler)?;

    let bracket = match built.as_gaussian() {
        Some(g) if cfg.n_lower_samples > 0 => Some(
            gaussian_bias_bracket(
                g,
                cfg.h,
                cfg.n_lower_samples,
                cfg.n_upper_mc,
                point_seed(cfg.seed, 0, 8),
            )
            .map_err(map_metrics)?,
        ),
        _ => None,
    };

    let row = vec![
        fmt_usize(d),
        fmt_f64(cfg.h),
        fmt_f64(coupled.gap_inf),
        fmt_f64(coupled.gap_inf_stderr),
        fmt_f64(coupled.gap_l2),
        fmt_f64(coupled.gap_l2_stderr),
        fmt_usize(coupled.n_gap_samples),
        fmt_opt(bracket.as_ref().map(|b| b.lower)),
        fmt_opt(bracket.as_ref().map(|b| b.lower_stderr)),
        fmt_opt(bracket.as_ref().map(|b| b.upper)),
        fmt_opt(bracket.as_ref().map(|b| b.upper_stderr)),
        fmt_flag(bracket.as_ref().map_or(true, |b| b.consistent())),
    ];
    write_csv(&out.results_csv(), COLUMNS, &[row])?;

    let results = json!({
        "d": d,
        "potential": cfg.potential.label(),
        "h": cfg.h,
        "burn_in": burn,
        "reference": coupled.reference,
        "gap_inf": coupled.gap_inf,
        "gap_inf_stderr": coupled.gap_inf_stderr,
        "gap_inf_sq": coupled.gap_inf_sq,
        "gap_l2": coupled.gap_l2,
        "gap_l2_stderr": coupled.gap_l2_stderr,
        "gap_l2_sq": coupled.gap_l2_sq,
        "n_gap_samples": coupled.n_gap_samples,
        "bracket": bracket.as_ref().map(to_json),
    });
    write_summary(
        &out.summary_json(),
        "coupling_estimate",
        cfg.seed,
        echo,
        COLUMNS,
        results,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PotentialSpec;
    use crate::output::read_csv;
    use tempfile::tempdir;

    #[test]
    fn gaussian_run_reports_consistent_bracket() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let cfg = CouplingEstimateConfig {
            potential: PotentialSpec::GaussianIdentity {
                d: 4,
                curvature: 1.0,
            },
            h: 0.1,
            n_steps: 20_000,
            burn_in: Some(1_000),
            reference: CouplingReferenceSpec::ExactGaussian,
            gap_stride: 2,
            n_lower_samples: 20_000,
            n_upper_mc: 20_000,
            seed: 3,
            out_dir: None,
        };
        run(&cfg, json!({}), &out).unwrap();
        let (header, rows) = read_csv(&out.results_csv()).unwrap();
        assert_eq!(rows.len(), 1);
        let flag_idx = header.iter().position(|h| h == "bracket_consistent").unwrap();
        assert_eq!(rows[0][flag_idx], "1");
    }

    #[test]
    fn exact_gaussian_reference_rejected_for_lattice() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let cfg = CouplingEstimateConfig {
            potential: PotentialSpec::LatticeQuartic {
                d: 4,
                alpha: 1.0,
                quartic: 0.5,
            },
            h: 0.05,
            n_steps: 100,
            burn_in: Some(10),
            reference: CouplingReferenceSpec::ExactGaussian,
            gap_stride: 1,
            n_lower_samples: 0,
            n_upper_mc: 0,
            seed: 3,
            out_dir: None,
        };
        assert!(matches!(run(&cfg, json!({}), &out), Err(CliError::Config(_))));
    }
}
