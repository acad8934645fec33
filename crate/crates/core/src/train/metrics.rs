use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Rows of numbers under fixed column names. Values are written with Rust's
/// shortest round-trip formatting, so equal runs give byte-equal files.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "metrics row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Peak signal-to-noise ratio in dB for signals with peak 1.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Running mean of several named quantities between log points.
#[derive(Clone, Debug, Default)]
pub(crate) struct Accumulator {
    sums: Vec<f64>,
    n: usize,
}

impl Accumulator {
    pub(crate) fn add(&mut self, values: &[f64]) {
        if self.sums.is_empty() {
            self.sums = vec![0.0; values.len()];
        }
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v;
        }
        self.n += 1;
    }

    pub(crate) fn take(&mut self) -> Vec<f64> {
        let out = self.sums.iter().map(|s| s / self.n.max(1) as f64).collect();
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        self.n = 0;
        out
    }
}
