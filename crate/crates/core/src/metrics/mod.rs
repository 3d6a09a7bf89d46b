//! Evaluation and fairness metrics.
//!
//! The positive class is CI (or depressed, for the depression task).
//! Undefined quantities (a metric over an empty class) are `None` or an
//! error, never NaN.

mod auc;
mod distribution;
mod subgroup;
pub mod tables;
mod ttest;

pub use auc::{auc, auc_brute_force, AucReport};
pub use distribution::{overlap_coefficient, score_distribution, ScoreDistribution, DEFAULT_BINS};
pub use subgroup::{
    disparity, subgroup_metrics, Dimension, DisparityReport, GroupKey, SubgroupReport,
};
pub use ttest::{paired_ttest, TTest};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    /// Tallies `(label, prediction)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (label, pred) in pairs {
            match (label, pred) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        c
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    /// Recall on the positive class, `None` without positives.
    pub fn sensitivity(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    /// Recall on the negative class, `None` without negatives.
    pub fn specificity(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.tn as f64 / self.negatives() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub uar: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 4] = ["accuracy", "uar", "sensitivity", "specificity"];

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.uar, self.sensitivity, self.specificity]
    }
}

/// Accuracy, UAR, sensitivity and specificity of a confusion table.
pub fn core_metrics(counts: &ConfusionCounts) -> Result<MetricReport> {
    let (Some(sensitivity), Some(specificity)) = (counts.sensitivity(), counts.specificity())
    else {
        return Err(Error::EmptyClass(format!(
            "metrics undefined with {} positive and {} negative samples",
            counts.positives(),
            counts.negatives()
        )));
    };
    let total = counts.positives() + counts.negatives();
    Ok(MetricReport {
        accuracy: (counts.tp + counts.tn) as f64 / total as f64,
        uar: (sensitivity + specificity) / 2.0,
        sensitivity,
        specificity,
    })
}
