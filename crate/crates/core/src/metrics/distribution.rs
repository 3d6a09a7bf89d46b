use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 30;

/// Per-class score histograms over shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    /// `n_bins + 1` increasing edges spanning the pooled score range.
    pub edges: Vec<f64>,
    pub positive_mass: Vec<f64>,
    pub negative_mass: Vec<f64>,
    pub overlap: f64,
}

/// Σ min(p_i, q_i) of two normalized histograms.
pub fn overlap_coefficient(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a.min(*b)).sum::<f64>().clamp(0.0, 1.0)
}

pub fn score_distribution(positive: &[f64], negative: &[f64], n_bins: usize) -> Result<ScoreDistribution> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptyClass(format!(
            "score distribution needs both classes ({} positive, {} negative)",
            positive.len(),
            negative.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be positive".into()));
    }
    if positive.iter().chain(negative).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let (lo, hi) = positive
        .iter()
        .chain(negative)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + width * i as f64 })
        .collect();
    let bin_of = |s: f64| -> usize {
        if hi == lo {
            0
        } else {
            (((s - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1)
        }
    };
    let histogram = |scores: &[f64]| {
        let mut counts = vec![0usize; n_bins];
        for &s in scores {
            counts[bin_of(s)] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / scores.len() as f64)
            .collect::<Vec<_>>()
    };
    let positive_mass = histogram(positive);
    let negative_mass = histogram(negative);
    let overlap = overlap_coefficient(&positive_mass, &negative_mass);
    Ok(ScoreDistribution {
        edges,
        positive_mass,
        negative_mass,
        overlap,
    })
}
