//! Dataset ingestion, synthetic data, and train-statistics standardization.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.x.cols()
    }

    /// Values of one feature column.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.x.rows()).map(|i| self.x.get(i, k)).collect()
    }
}

/// Cell values treated as missing rather than malformed.
fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "?" || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Loads a numeric CSV with a header row. Rows containing missing cells are
/// dropped; the second return value counts them. Any other unparseable cell
/// is an error naming the row and column.
pub fn load_csv(path: &Path, target_column: &str) -> Result<(Dataset, usize)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTargetColumn { name: target_column.to_owned() })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;
    'rows: for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut features = Vec::with_capacity(headers.len() - 1);
        let mut target = 0.0;
        for (col, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                dropped += 1;
                continue 'rows;
            }
            let value: f64 = cell.trim().parse().map_err(|e| Error::CsvCell {
                row: row_idx + 1,
                column: headers[col].clone(),
                message: format!("{e}: {cell:?}"),
            })?;
            // Spellings like "-nan" or "inf" parse as floats; they carry no
            // usable value, so the row counts as missing.
            if !value.is_finite() {
                dropped += 1;
                continue 'rows;
            }
            if col == target_idx {
                target = value;
            } else {
                features.push(value);
            }
        }
        rows.push(features);
        y.push(target);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    Ok((
        Dataset { name, x: Matrix::from_rows(&rows), y, feature_names },
        dropped,
    ))
}

/// Friedman #1 synthetic regression benchmark:
/// y = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5 + noise,
/// with ten U[0, 1] features of which five are informative.
pub fn generate_fried(n: usize, noise_std: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).expect("valid noise std"))
    } else {
        None
    };
    let mut x = Matrix::zeros(n, 10);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.random::<f64>();
        }
        let base = fried_formula(row);
        let eps = noise.map_or(0.0, |d| d.sample(&mut rng));
        y.push(base + eps);
    }
    Dataset {
        name: "fried".to_owned(),
        x,
        y,
        feature_names: (1..=10).map(|i| format!("x{i}")).collect(),
    }
}

pub fn fried_formula(row: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * row[0] * row[1]).sin()
        + 20.0 * (row[2] - 0.5) * (row[2] - 0.5)
        + 10.0 * row[3]
        + 5.0 * row[4]
}

/// Per-column z-score transform fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
}

impl Standardizer {
    /// Fits means and (population) standard deviations. Zero-variance
    /// features are rejected by name.
    pub fn fit(x: &Matrix, y: &[f64], feature_names: &[String]) -> Result<Self> {
        assert_eq!(x.rows(), y.len());
        if x.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = x.rows() as f64;
        let mut feature_mean = vec![0.0; x.cols()];
        let mut feature_std = vec![0.0; x.cols()];
        for k in 0..x.cols() {
            let mut sum = 0.0;
            for i in 0..x.rows() {
                sum += x.get(i, k);
            }
            let mean = sum / n;
            let mut ss = 0.0;
            for i in 0..x.rows() {
                let d = x.get(i, k) - mean;
                ss += d * d;
            }
            let std = (ss / n).sqrt();
            if std <= 0.0 {
                let name = feature_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("feature {k}"));
                return Err(Error::ZeroVarianceFeature { name });
            }
            feature_mean[k] = mean;
            feature_std[k] = std;
        }
        let label_mean = y.iter().sum::<f64>() / n;
        let label_var = y.iter().map(|v| (v - label_mean) * (v - label_mean)).sum::<f64>() / n;
        let label_std = label_var.sqrt();
        if label_std <= 0.0 {
            return Err(Error::ZeroVarianceFeature { name: "label".to_owned() });
        }
        Ok(Standardizer { feature_mean, feature_std, label_mean, label_std })
    }

    pub fn apply_features(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.feature_mean[k]) / self.feature_std[k];
            }
        }
        out
    }

    pub fn invert_features(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * self.feature_std[k] + self.feature_mean[k];
            }
        }
        out
    }

    pub fn apply_labels(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.label_mean) / self.label_std).collect()
    }

    pub fn invert_labels(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.label_std + self.label_mean).collect()
    }
}
