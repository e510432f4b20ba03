//! Sample matrices with provenance, and their on-disk format: an 8-byte
//! header (`n`, `d` as little-endian `u32`) followed by row-major
//! little-endian `f64` entries, plus a JSON sidecar describing where the
//! samples came from.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::samplers::ThinnedTrajectory;

use super::MetricsError;

/// Where a sample matrix came from: enough to regenerate it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Provenance {
    pub sampler: String,
    pub seed: u64,
    #[serde(default)]
    pub note: String,
}

impl Provenance {
    pub fn new(sampler: impl Into<String>, seed: u64) -> Self {
        Self {
            sampler: sampler.into(),
            seed,
            note: String::new(),
        }
    }

    fn unknown() -> Self {
        Self {
            sampler: "unknown".into(),
            seed: 0,
            note: "missing sidecar".into(),
        }
    }
}

/// `n x d` row-major sample matrix; at least two finite rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSamples {
    n: usize,
    d: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl EmpiricalSamples {
    pub fn new(
        n: usize,
        d: usize,
        data: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self, MetricsError> {
        if n < 2 {
            return Err(MetricsError::TooFewSamples { needed: 2, got: n });
        }
        if d == 0 || data.len() != n * d {
            return Err(MetricsError::DimensionMismatch(format!(
                "data length {} does not match {n} x {d}",
                data.len()
            )));
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MetricsError::NonFinite {
                    row: idx / d,
                    col: idx % d,
                });
            }
        }
        Ok(Self {
            n,
            d,
            data,
            provenance,
        })
    }

    /// Wraps thinned chain output without copying.
    pub fn from_thinned(t: ThinnedTrajectory, provenance: Provenance) -> Result<Self, MetricsError> {
        Self::new(t.n_rows, t.dim, t.data, provenance)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.data[r * self.d + j]).collect()
    }

    /// Column `j`, sorted ascending.
    pub fn sorted_column(&self, j: usize) -> Vec<f64> {
        let mut col = self.column(j);
        col.sort_by(|a, b| a.partial_cmp(b).expect("entries are finite"));
        col
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.column(j).iter().sum::<f64>() / self.n as f64
    }

    /// Copy with per-column means subtracted.
    pub fn centered(&self) -> Self {
        let means: Vec<f64> = (0..self.d).map(|j| self.column_mean(j)).collect();
        let mut data = self.data.clone();
        for r in 0..self.n {
            for j in 0..self.d {
                data[r * self.d + j] -= means[j];
            }
        }
        Self {
            n: self.n,
            d: self.d,
            data,
            provenance: self.provenance.clone(),
        }
    }

    /// Copy keeping only the listed coordinates, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self, MetricsError> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.d) {
            return Err(MetricsError::DimensionMismatch(format!(
                "column selection {cols:?} invalid for d = {}",
                self.d
            )));
        }
        let mut data = Vec::with_capacity(self.n * cols.len());
        for r in 0..self.n {
            for &c in cols {
                data.push(self.data[r * self.d + c]);
            }
        }
        Self::new(self.n, cols.len(), data, self.provenance.clone())
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes the binary matrix to `path` and the provenance sidecar next
    /// to it (same stem, `.json` extension).
    pub fn write_binary(&self, path: &Path) -> Result<(), MetricsError> {
        if self.n > u32::MAX as usize || self.d > u32::MAX as usize {
            return Err(MetricsError::InvalidParameter(
                "matrix too large for the u32 header".into(),
            ));
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&(self.n as u32).to_le_bytes())?;
        file.write_all(&(self.d as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;
        let sidecar = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(Self::sidecar_path(path), sidecar)?;
        Ok(())
    }

    /// Reads the binary format; a missing sidecar degrades to an unknown
    /// provenance rather than failing.
    pub fn read_binary(path: &Path) -> Result<Self, MetricsError> {
        let mut file = fs::File::open(path)?;
        let mut header = [0u8; 8];
        file.read_exact(&mut header)
            .map_err(|_| MetricsError::MalformedFile("file shorter than header".into()))?;
        let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .ok_or_else(|| MetricsError::MalformedFile("header sizes overflow".into()))?;
        if raw.len() != expected {
            return Err(MetricsError::MalformedFile(format!(
                "payload is {} bytes, header {n} x {d} implies {expected}",
                raw.len()
            )));
        }
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let provenance = match fs::read_to_string(Self::sidecar_path(path)) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => Provenance::unknown(),
        };
        Self::new(n, d, data, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy() -> EmpiricalSamples {
        EmpiricalSamples::new(
            3,
            2,
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0],
            Provenance::new("toy", 7),
        )
        .unwrap()
    }

    #[test]
    fn accessors_and_centering() {
        let s = toy();
        assert_eq!(s.row(1), &[2.0, 20.0]);
        assert_eq!(s.column(1), vec![10.0, 20.0, 30.0]);
        assert_eq!(s.column_mean(0), 2.0);
        let c = s.centered();
        assert_eq!(c.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.column_mean(1), 0.0);
    }

    #[test]
    fn sorted_column_orders_values() {
        let s = EmpiricalSamples::new(3, 1, vec![3.0, 1.0, 2.0], Provenance::new("t", 0)).unwrap();
        assert_eq!(s.sorted_column(0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let p = Provenance::new("t", 0);
        assert!(EmpiricalSamples::new(1, 2, vec![0.0, 0.0], p.clone()).is_err());
        assert!(EmpiricalSamples::new(2, 2, vec![0.0; 3], p.clone()).is_err());
        assert!(matches!(
            EmpiricalSamples::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], p.clone()),
            Err(MetricsError::NonFinite { row: 0, col: 1 })
        ));
        assert!(EmpiricalSamples::new(2, 0, vec![], p).is_err());
    }

    #[test]
    fn binary_round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.bin");
        let s = toy();
        s.write_binary(&path).unwrap();
        let back = EmpiricalSamples::read_binary(&path).unwrap();
        assert_eq!(s, back);
        // sidecar really is JSON next to the matrix
        let sidecar = std::fs::read_to_string(dir.path().join("samples.json")).unwrap();
        assert!(sidecar.contains("\"toy\""));
    }

    #[test]
    fn missing_sidecar_degrades_gracefully() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.bin");
        toy().write_binary(&path).unwrap();
        std::fs::remove_file(dir.path().join("samples.json")).unwrap();
        let back = EmpiricalSamples::read_binary(&path).unwrap();
        assert_eq!(back.provenance().sampler, "unknown");
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.bin");
        toy().write_binary(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            EmpiricalSamples::read_binary(&path),
            Err(MetricsError::MalformedFile(_))
        ));
    }

    #[test]
    fn column_selection() {
        let s = toy();
        let sel = s.select_columns(&[1]).unwrap();
        assert_eq!(sel.d(), 1);
        assert_eq!(sel.column(0), vec![10.0, 20.0, 30.0]);
        assert!(s.select_columns(&[2]).is_err());
        assert!(s.select_columns(&[]).is_err());
    }
}
