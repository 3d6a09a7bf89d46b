use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Outcome of a two-sided paired t-test over per-fold differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TTest {
    Test { t: f64, df: usize, p: f64 },
    /// Every fold gave the same nonzero difference; no p-value exists.
    Degenerate { mean: f64 },
}

impl TTest {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            TTest::Test { p, .. } => Some(*p),
            TTest::Degenerate { .. } => None,
        }
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value().is_some_and(|p| p < alpha)
    }
}

/// `t = mean / (sd / sqrt(n))` with `n - 1` degrees of freedom.
pub fn paired_ttest(differences: &[f64]) -> Result<TTest> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "paired t-test needs at least 2 folds, got {n}"
        )));
    }
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("t-test differences".into()));
    }
    let nf = n as f64;
    let mean = differences.iter().sum::<f64>() / nf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    if differences.iter().all(|&d| d == differences[0]) {
        let mean = differences[0];
        return Ok(if mean == 0.0 {
            TTest::Test { t: 0.0, df, p: 1.0 }
        } else {
            TTest::Degenerate { mean }
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest::Test { t, df, p })
}
