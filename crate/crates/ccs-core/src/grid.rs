//! Two-dimensional population of variable values, with CSV persistence.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CcsError, Result};

/// A real-valued matrix over the product population `U_M x U_D`: one row per
/// unit of the first dimension, one column per unit of the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationGrid {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>, // row-major
    pub label: String,
}

impl PopulationGrid {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(CcsError::DimensionMismatch("grid dimensions must be positive".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(CcsError::DimensionMismatch(format!(
                "expected {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CcsError::DimensionMismatch("grid contains non-finite values".into()));
        }
        Ok(Self { n_rows, n_cols, values, label: label.into() })
    }

    pub fn constant(n_rows: usize, n_cols: usize, value: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(n_rows, n_cols, vec![value; n_rows * n_cols], label)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_cols + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// The population total `t_Y`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for (k, v) in self.row(i).iter().enumerate() {
                out[k] += v;
            }
        }
        out
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64, label: impl Into<String>) -> Result<Self> {
        Self::new(self.n_rows, self.n_cols, self.values.iter().map(|&v| f(v)).collect(), label)
    }

    /// Writes the `# ccs-pop v1` CSV format. Values round-trip exactly
    /// (shortest representation that parses back to the same f64).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "# ccs-pop v1, nm={}, nd={}, label={}", self.n_rows, self.n_cols, self.label)?;
        for i in 0..self.n_rows {
            let mut line = String::new();
            for (k, v) in self.row(i).iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| CcsError::PopFormat("empty file".into()))??;
        let rest = header
            .strip_prefix("# ccs-pop v1,")
            .ok_or_else(|| CcsError::PopFormat("missing '# ccs-pop v1' header".into()))?;
        let mut nm = None;
        let mut nd = None;
        let mut label = String::new();
        for field in rest.splitn(3, ',') {
            let field = field.trim();
            if let Some(v) = field.strip_prefix("nm=") {
                nm = Some(v.parse::<usize>().map_err(|e| CcsError::PopFormat(format!("bad nm: {e}")))?);
            } else if let Some(v) = field.strip_prefix("nd=") {
                nd = Some(v.parse::<usize>().map_err(|e| CcsError::PopFormat(format!("bad nd: {e}")))?);
            } else if let Some(v) = field.strip_prefix("label=") {
                label = v.to_string();
            } else {
                return Err(CcsError::PopFormat(format!("unrecognized header field '{field}'")));
            }
        }
        let n_rows = nm.ok_or_else(|| CcsError::PopFormat("header missing nm".into()))?;
        let n_cols = nd.ok_or_else(|| CcsError::PopFormat("header missing nd".into()))?;
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for (row_idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut count = 0;
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|e| CcsError::PopFormat(format!("row {}: bad value '{tok}': {e}", row_idx + 1)))?;
                values.push(v);
                count += 1;
            }
            if count != n_cols {
                return Err(CcsError::PopFormat(format!(
                    "row {}: expected {n_cols} values, got {count}",
                    row_idx + 1
                )));
            }
        }
        if values.len() != n_rows * n_cols {
            return Err(CcsError::PopFormat(format!(
                "expected {n_rows} rows, got {}",
                values.len() / n_cols
            )));
        }
        Self::new(n_rows, n_cols, values, label)
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Manifest grouping several variable files of one population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationManifest {
    pub variables: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: String,
}

impl PopulationManifest {
    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&ManifestEntry> {
        self.variables.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let g = PopulationGrid::new(
            2,
            3,
            vec![1.0, 0.1 + 0.2, -3.5e-17, 200.00000000000003, 4.0, 1e300],
            "rt",
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = PopulationGrid::read_csv(&buf[..]).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(PopulationGrid::new(1, 2, vec![1.0, f64::NAN], "x").is_err());
    }

    #[test]
    fn rejects_wrong_row_width() {
        let text = "# ccs-pop v1, nm=2, nd=2, label=t\n1,2\n3\n";
        assert!(PopulationGrid::read_csv(text.as_bytes()).is_err());
    }
}
