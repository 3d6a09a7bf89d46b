use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension z-score fitted on a training set.
///
/// `fit_set_hash` identifies the rows the statistics came from, so run
/// artifacts can show the normalizer never saw test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fit_set_hash: String,
}

impl Normalizer {
    pub fn fit(x: &Array2<f64>, fit_set_hash: impl Into<String>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidData(format!(
                "normalizer needs at least 2 samples, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let m = col.sum() / n as f64;
            if lo == hi {
                mean.push(lo);
                std.push(0.0);
            } else {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
                mean.push(m);
                std.push(var.sqrt());
            }
        }
        Ok(Self {
            mean,
            std,
            fit_set_hash: fit_set_hash.into(),
        })
    }

    /// `(x - mean) / std`; zero-variance dimensions map to 0.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "normalizer input".into(),
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            if s == 0.0 {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }
}
