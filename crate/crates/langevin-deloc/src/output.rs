//! Output conventions shared by every subcommand: `results.csv`,
//! `summary.json`, and a `plots/` directory, all byte-deterministic for a
//! fixed (config, seed).
//!
//! Every number in the CSV either sits next to a `*_stderr` column or
//! belongs to a column flagged `exact`/`formula` in the summary's column
//! metadata. Cells never contain commas, so no quoting is needed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::CliError;

/// Resolved output locations for one run.
pub struct OutPaths {
    dir: PathBuf,
}

impl OutPaths {
    /// Creates the directory tree (including `plots/`).
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir.join("plots"))
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn results_csv(&self) -> PathBuf {
        self.dir.join("results.csv")
    }

    pub fn summary_json(&self) -> PathBuf {
        self.dir.join("summary.json")
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.dir.join("plots").join(name)
    }
}

/// How a CSV column should be read; recorded in the summary so that every
/// emitted number is either paired with a stderr or flagged as exact.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ColumnMeta {
    pub name: &'static str,
    /// `coordinate` (sweep axis), `measured` (has a `*_stderr` partner),
    /// `stderr`, `formula` (exact given the inputs), or `flag`.
    pub kind: &'static str,
}

pub const fn col(name: &'static str, kind: &'static str) -> ColumnMeta {
    ColumnMeta { name, kind }
}

/// Shortest round-trip decimal form; empty cells encode absent values.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_usize(v: usize) -> String {
    format!("{v}")
}

pub fn fmt_flag(v: bool) -> String {
    if v { "1" } else { "0" }.to_string()
}

/// Writes the table with a header line; one write, rows in sweep order.
pub fn write_csv(
    path: &Path,
    columns: &[ColumnMeta],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut text = String::new();
    let header: Vec<&str> = columns.iter().map(|c| c.name).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Reads a CSV written by [`write_csv`] back into header and string cells.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

/// Column values parsed as floats; empty cells become NaN.
pub fn csv_column(header: &[String], rows: &[Vec<String>], name: &str) -> Option<Vec<f64>> {
    let idx = header.iter().position(|h| h == name)?;
    Some(
        rows.iter()
            .map(|r| {
                let cell = r.get(idx).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().unwrap_or(f64::NAN)
                }
            })
            .collect(),
    )
}

/// Assembles and writes `summary.json`: a versioned envelope holding the
/// config echo, the column metadata, and the per-experiment results.
pub fn write_summary(
    path: &Path,
    experiment: &str,
    seed: u64,
    config_echo: Value,
    columns: &[ColumnMeta],
    results: Value,
) -> Result<(), CliError> {
    let body = serde_json::json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "experiment": experiment,
        "seed": seed,
        "config": config_echo,
        "columns": columns,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&body)
        .map_err(|e| CliError::Runtime(format!("summary serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Serializes a report type into the summary's results tree.
pub fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips_and_is_stable() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0 / 0.95), "1.0526315789473684");
        assert_eq!(fmt_f64(-3.0), "-3");
        assert_eq!(fmt_opt(None), "");
        let v = 1.0526315789473684_f64;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_round_trip_preserves_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let cols = [col("d", "coordinate"), col("x", "measured"), col("x_stderr", "stderr")];
        let rows = vec![
            vec!["4".into(), "0.5".into(), "0.01".into()],
            vec!["8".into(), "".into(), "0.02".into()],
        ];
        write_csv(&path, &cols, &rows).unwrap();
        let (header, back) = read_csv(&path).unwrap();
        assert_eq!(header, vec!["d", "x", "x_stderr"]);
        assert_eq!(back, rows);
        let xs = csv_column(&header, &back, "x").unwrap();
        assert_eq!(xs[0], 0.5);
        assert!(xs[1].is_nan());
        assert!(csv_column(&header, &back, "missing").is_none());
    }

    #[test]
    fn summary_contains_envelope_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        write_summary(
            &path,
            "run_chain",
            9,
            serde_json::json!({"h": 0.1}),
            &[col("d", "coordinate")],
            serde_json::json!({"ok": true}),
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["experiment"], "run_chain");
        assert_eq!(v["seed"], 9);
        assert_eq!(v["columns"][0]["name"], "d");
        assert_eq!(v["results"]["ok"], true);
        assert!(text.ends_with('\n'));
    }
}
