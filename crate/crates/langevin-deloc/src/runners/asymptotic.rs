//! `asymptotic-check`: small-step behaviour of the unadjusted chain. Four
//! optional sections: the two integral formulas for the first-order bias
//! slope of an observable, a finite-step regression of the measured bias
//! against the step size, a catalog of (potential, observable) pairs on
//! which the two formulas must agree, and the scaling of coordinate-sum
//! bias slopes with the number of summed coordinates.

use deloc_core::asymptotics::{
    empirical_slope, first_order_slope, sqrt_k_scaling_check, EmpiricalSlopeConfig, SqrtKConfig,
};
use deloc_core::potentials::ProductPotential;
use serde_json::{json, Value};

use crate::config::{AsymptoticCheckConfig, CliError, SqrtKSpec};
use crate::output::{
    col, fmt_f64, fmt_usize, read_csv, to_json, write_csv, write_summary, ColumnMeta, OutPaths,
};
use crate::plot::{Chart, Series};

use super::{map_asymptotics, point_seed, resolve_reference, slope_reference};

const COLUMNS: &[ColumnMeta] = &[
    col("section", "coordinate"),
    col("pair", "coordinate"),
    col("d", "coordinate"),
    col("h", "coordinate"),
    col("k", "coordinate"),
    col("value", "measured"),
    col("value_stderr", "stderr"),
    col("value_b", "measured"),
    col("value_b_stderr", "stderr"),
];

pub fn run(cfg: &AsymptoticCheckConfig, echo: Value, out: &OutPaths) -> Result<(), CliError> {
    if cfg.slopes.is_none() && cfg.catalog.is_none() && cfg.sqrt_k.is_none() {
        return Err(CliError::Config(
            "configure at least one section: slopes, catalog, or sqrt_k".into(),
        ));
    }
    if cfg.empirical.is_some() && cfg.slopes.is_none() {
        return Err(CliError::Config(
            "the empirical section regresses the observable configured in slopes; add slopes".into(),
        ));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut results = serde_json::Map::new();

    if let Some(spec) = &cfg.slopes {
        let built = spec.potential.build()?;
        let p = built.as_dyn();
        let resolved = resolve_reference(&built, &spec.reference)?;
        let sref = slope_reference(&resolved, &spec.reference);
        let mut report = first_order_slope(
            p,
            &spec.observable,
            spec.n_mc,
            point_seed(cfg.seed, 0, 0),
            &sref,
        )
        .map_err(map_asymptotics)?;
        rows.push(vec![
            "slope_formulas".into(),
            String::new(),
            fmt_usize(p.dim()),
            String::new(),
            String::new(),
            fmt_f64(report.slope_formula_a),
            fmt_f64(report.stderr_a),
            fmt_f64(report.slope_formula_b),
            fmt_f64(report.stderr_b),
        ]);

        let empirical = match &cfg.empirical {
            Some(emp) => {
                let ecfg = EmpiricalSlopeConfig {
                    n_retained: emp.n_retained,
                    burn_in: emp.burn_in,
                    n_chains: emp.n_chains,
                    thin: emp.thin,
                    n_ref: emp.n_ref,
                    seed: point_seed(cfg.seed, 1, 0),
                };
                let fit = empirical_slope(p, &spec.observable, &emp.h_grid, &sref, &ecfg)
                    .map_err(map_asymptotics)?;
                for pt in &fit.points {
                    rows.push(vec![
                        "h_bias".into(),
                        String::new(),
                        fmt_usize(p.dim()),
                        fmt_f64(pt.h),
                        String::new(),
                        fmt_f64(pt.bias),
                        fmt_f64(pt.stderr),
                        String::new(),
                        String::new(),
                    ]);
                }
                rows.push(vec![
                    "h_slope".into(),
                    String::new(),
                    fmt_usize(p.dim()),
                    String::new(),
                    String::new(),
                    fmt_f64(fit.slope),
                    fmt_f64(fit.stderr),
                    String::new(),
                    String::new(),
                ]);
                report.slope_empirical = Some(fit.slope);
                report.stderr_empirical = Some(fit.stderr);
                Some(fit)
            }
            None => None,
        };

        // small guard keeps an exact (zero-variance) formula from failing
        // its own consistency check on rounding alone
        let diff = (report.slope_formula_a - report.slope_formula_b).abs();
        let consistent = diff <= 3.0 * report.stderr_diff + 1e-12;
        results.insert(
            "slopes".into(),
            json!({
                "potential": spec.potential.label(),
                "observable": to_json(&spec.observable),
                "report": to_json(&report),
                "consistent": consistent,
            }),
        );
        if let Some(fit) = empirical {
            let b = report.slope_formula_b;
            let tol = (0.1 * b.abs()).max(3.0 * (fit.stderr + report.stderr_b));
            results.insert(
                "empirical".into(),
                json!({
                    "fit": to_json(&fit),
                    "formula_slope": b,
                    "tolerance": tol,
                    "within": (fit.slope - b).abs() <= tol,
                }),
            );
        }
    }

    if let Some(pairs) = &cfg.catalog {
        let mut table = Vec::new();
        let mut all_agree = true;
        for (j, pair) in pairs.iter().enumerate() {
            let built = pair.potential.build()?;
            let p = built.as_dyn();
            let resolved = resolve_reference(&built, &pair.reference)?;
            let sref = slope_reference(&resolved, &pair.reference);
            let report = first_order_slope(
                p,
                &pair.observable,
                pair.n_mc,
                point_seed(cfg.seed, 2 + j, 0),
                &sref,
            )
            .map_err(map_asymptotics)?;
            rows.push(vec![
                "catalog_pair".into(),
                fmt_usize(j),
                fmt_usize(p.dim()),
                String::new(),
                String::new(),
                fmt_f64(report.slope_formula_a),
                fmt_f64(report.stderr_a),
                fmt_f64(report.slope_formula_b),
                fmt_f64(report.stderr_b),
            ]);
            let diff = (report.slope_formula_a - report.slope_formula_b).abs();
            let agree = diff <= 3.0 * report.stderr_diff + 1e-12;
            all_agree &= agree;
            table.push(json!({
                "pair": j,
                "potential": pair.potential.label(),
                "observable": to_json(&pair.observable),
                "slope_a": report.slope_formula_a,
                "stderr_a": report.stderr_a,
                "slope_b": report.slope_formula_b,
                "stderr_b": report.stderr_b,
                "stderr_diff": report.stderr_diff,
                "agree": agree,
            }));
        }
        results.insert(
            "catalog".into(),
            json!({ "pairs": table, "all_agree": all_agree }),
        );
    }

    if let Some(spec) = &cfg.sqrt_k {
        let offset = 2 + cfg.catalog.as_ref().map_or(0, Vec::len);
        let section = run_sqrt_k(cfg, spec, offset, &mut rows)?;
        results.insert("sqrt_k".into(), section);
    }

    write_csv(&out.results_csv(), COLUMNS, &rows)?;
    write_summary(
        &out.summary_json(),
        "asymptotic_check",
        cfg.seed,
        echo,
        COLUMNS,
        Value::Object(results),
    )?;
    plot_sections(cfg, out)
}

fn run_sqrt_k(
    cfg: &AsymptoticCheckConfig,
    spec: &SqrtKSpec,
    point_offset: usize,
    rows: &mut Vec<Vec<String>>,
) -> Result<Value, CliError> {
    if spec.d_list.is_empty() {
        return Err(CliError::Config("sqrt_k d_list must not be empty".into()));
    }
    let mut reports = Vec::new();
    for (t, &d) in spec.d_list.iter().enumerate() {
        let product = ProductPotential::perturbed_gaussian(d, spec.n_mix, spec.p, spec.mu1, spec.mu2)
            .map_err(|e| CliError::Config(format!("at /sqrt_k: {e}")))?;
        let kcfg = SqrtKConfig {
            n_mc: spec.n_mc,
            seed: point_seed(cfg.seed, point_offset + t, 0),
        };
        let report = sqrt_k_scaling_check(&product, &spec.k_grid, spec.h, &kcfg)
            .map_err(map_asymptotics)?;
        for row in &report.rows {
            rows.push(vec![
                "k_slope".into(),
                String::new(),
                fmt_usize(d),
                fmt_f64(spec.h),
                fmt_usize(row.k),
                fmt_f64(row.slope_a),
                fmt_f64(row.stderr_a),
                fmt_f64(row.slope_b),
                fmt_f64(row.stderr_b),
            ]);
        }
        reports.push((d, report));
    }

    // the per-K slope must not depend on the ambient dimension
    let mut cross_d = Vec::new();
    for &k in &spec.k_grid {
        let at_k: Vec<(usize, f64, f64)> = reports
            .iter()
            .flat_map(|(d, rep)| {
                rep.rows
                    .iter()
                    .filter(|r| r.k == k)
                    .map(|r| (*d, r.slope_b, r.stderr_b))
            })
            .collect();
        let mut max_gap = 0.0f64;
        let mut tol = 0.0f64;
        let mut agree = true;
        for i in 0..at_k.len() {
            for j in (i + 1)..at_k.len() {
                let gap = (at_k[i].1 - at_k[j].1).abs();
                let t = 3.0 * (at_k[i].2 + at_k[j].2) + 1e-12;
                if gap > max_gap {
                    max_gap = gap;
                    tol = t;
                }
                agree &= gap <= t;
            }
        }
        cross_d.push(json!({ "k": k, "max_gap": max_gap, "tolerance": tol, "agree": agree }));
    }

    let per_d: Vec<Value> = reports
        .iter()
        .map(|(d, rep)| json!({ "d": d, "report": to_json(rep) }))
        .collect();
    Ok(json!({ "per_d": per_d, "cross_d": cross_d }))
}

/// Rows of one section, as (row, section-matched) pairs from the CSV.
fn section_rows<'a>(
    header: &[String],
    rows: &'a [Vec<String>],
    section: &str,
) -> Vec<&'a Vec<String>> {
    let idx = header.iter().position(|h| h == "section");
    match idx {
        Some(i) => rows.iter().filter(|r| r.get(i).map(String::as_str) == Some(section)).collect(),
        None => Vec::new(),
    }
}

fn cell(header: &[String], row: &[String], name: &str) -> f64 {
    header
        .iter()
        .position(|h| h == name)
        .and_then(|i| row.get(i))
        .and_then(|c| c.parse().ok())
        .unwrap_or(f64::NAN)
}

fn plot_sections(cfg: &AsymptoticCheckConfig, out: &OutPaths) -> Result<(), CliError> {
    let (header, rows) = read_csv(&out.results_csv())?;

    if cfg.empirical.is_some() {
        let pts = section_rows(&header, &rows, "h_bias");
        let hs: Vec<f64> = pts.iter().map(|r| cell(&header, r, "h")).collect();
        let biases: Vec<f64> = pts.iter().map(|r| cell(&header, r, "value")).collect();
        let ses: Vec<f64> = pts.iter().map(|r| cell(&header, r, "value_stderr")).collect();
        let slope_b = section_rows(&header, &rows, "slope_formulas")
            .first()
            .map(|r| cell(&header, r, "value_b"))
            .unwrap_or(f64::NAN);
        let mut chart = Chart::new(
            "Observable bias against step size",
            "step size h",
            "bias of E f",
        );
        let line: Vec<f64> = hs.iter().map(|&h| slope_b * h).collect();
        chart.push(Series::new("measured", hs.clone(), biases).with_se(ses));
        chart.push(Series::new("first-order formula", hs, line));
        chart.write(&out.plot("bias_vs_h.svg"))?;
    }

    if cfg.sqrt_k.is_some() {
        let pts = section_rows(&header, &rows, "k_slope");
        let mut chart = Chart::new(
            "Coordinate-sum bias slope against K",
            "summed coordinates K",
            "|slope|",
        )
        .log_log();
        let mut ds: Vec<usize> = pts.iter().map(|r| cell(&header, r, "d") as usize).collect();
        ds.sort_unstable();
        ds.dedup();
        for d in ds {
            let sel: Vec<&&Vec<String>> = pts
                .iter()
                .filter(|r| cell(&header, r, "d") as usize == d)
                .collect();
            let ks: Vec<f64> = sel.iter().map(|r| cell(&header, r, "k")).collect();
            let slopes: Vec<f64> = sel
                .iter()
                .map(|r| cell(&header, r, "value_b").abs())
                .collect();
            let ses: Vec<f64> = sel
                .iter()
                .map(|r| cell(&header, r, "value_b_stderr"))
                .collect();
            chart.push(Series::new(format!("d = {d}"), ks, slopes).with_se(ses));
        }
        chart.write(&out.plot("slope_vs_k.svg"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PotentialSpec, ReferenceSpec, SlopesSpec};
    use deloc_core::asymptotics::ObservableSpec;
    use tempfile::tempdir;

    #[test]
    fn empty_config_is_rejected() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let cfg = AsymptoticCheckConfig {
            slopes: None,
            empirical: None,
            catalog: None,
            sqrt_k: None,
            seed: 1,
            out_dir: None,
        };
        assert!(matches!(run(&cfg, json!({}), &out), Err(CliError::Config(_))));
    }

    #[test]
    fn standard_gaussian_square_slope_is_minus_half() {
        let dir = tempdir().unwrap();
        let out = OutPaths::create(dir.path()).unwrap();
        let cfg = AsymptoticCheckConfig {
            slopes: Some(SlopesSpec {
                potential: PotentialSpec::GaussianIdentity {
                    d: 1,
                    curvature: 1.0,
                },
                observable: ObservableSpec::quadratic_diag(&[1.0]),
                n_mc: 40_000,
                reference: ReferenceSpec::Exact,
            }),
            empirical: None,
            catalog: None,
            sqrt_k: None,
            seed: 9,
            out_dir: None,
        };
        run(&cfg, json!({}), &out).unwrap();
        let summary: Value =
            serde_json::from_str(&std::fs::read_to_string(out.summary_json()).unwrap()).unwrap();
        let report = &summary["results"]["slopes"]["report"];
        // formula B integrates exactly on this pair
        assert!((report["slope_formula_b"].as_f64().unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(summary["results"]["slopes"]["consistent"], true);
    }
}
