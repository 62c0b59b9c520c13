use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// `n x p` detector input, row-major, one row per sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            bail!(Invariant, "feature matrix needs at least one column");
        }
        if data.len() != ids.len() * cols {
            bail!(
                Invariant,
                "feature data has {} values, expected {} rows x {cols}",
                data.len(),
                ids.len()
            );
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            bail!(
                Invariant,
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            );
        }
        Ok(Self { ids, cols, data })
    }

    /// Builds a matrix with generated ids `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            bail!(Invariant, "rows have inconsistent lengths");
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Population variance of each column.
    pub fn column_variances(&self) -> Vec<f64> {
        let mean = self.column_means();
        let mut var = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let n = self.rows().max(1) as f64;
        var.iter_mut().for_each(|s| *s /= n);
        var
    }
}

/// Per-column preprocessing applied before the one-class SVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Standardize {
    #[default]
    None,
    /// Subtract the training mean and divide by the training stddev.
    Zscore,
    /// Divide by the training stddev only, keeping the origin fixed.
    Scale,
}

/// Learned per-column `(mean, stddev)`; `transform(x) = (x - mean) / stddev`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    /// Returns `None` for [`Standardize::None`]. Zero-variance columns get stddev 1.
    pub fn fit(features: &FeatureMatrix, mode: Standardize) -> Option<Self> {
        let stddev: Vec<f64> = features
            .column_variances()
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        match mode {
            Standardize::None => None,
            Standardize::Zscore => Some(Self {
                mean: features.column_means(),
                stddev,
            }),
            Standardize::Scale => Some(Self {
                mean: vec![0.0; features.cols()],
                stddev,
            }),
        }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(&self.mean)
                .zip(&self.stddev)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    pub fn transform(&self, features: &FeatureMatrix) -> FeatureMatrix {
        let mut data = Vec::with_capacity(features.data().len());
        let mut buf = Vec::with_capacity(features.cols());
        for row in features.iter_rows() {
            self.transform_row(row, &mut buf);
            data.extend_from_slice(&buf);
        }
        FeatureMatrix {
            ids: features.ids.clone(),
            cols: features.cols,
            data,
        }
    }
}
