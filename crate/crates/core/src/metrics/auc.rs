use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AucReport {
    pub fn pairs(&self) -> usize {
        self.n_pos * self.n_neg
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from midranks (Mann–Whitney U).
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<AucReport> {
    check(positive, negative)?;
    let mut pooled: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of midranks over positives, doubled so it stays integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let twice_midrank = (i + j + 2) as u128;
        let n_pos_tied = pooled[i..=j].iter().filter(|p| p.1).count() as u128;
        twice_rank_sum += twice_midrank * n_pos_tied;
        i = j + 1;
    }
    let n_pos = positive.len() as u128;
    let n_neg = negative.len() as u128;
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(AucReport {
        auc: twice_u as f64 / (2 * n_pos * n_neg) as f64,
        n_pos: positive.len(),
        n_neg: negative.len(),
    })
}

/// All-pairs AUC, O(n_pos · n_neg).
pub fn auc_brute_force(positive: &[f64], negative: &[f64]) -> Result<f64> {
    check(positive, negative)?;
    let mut twice_wins: u64 = 0;
    for &p in positive {
        for &n in negative {
            twice_wins += match p.partial_cmp(&n) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice_wins as f64 / (2 * positive.len() * negative.len()) as f64)
}

fn check(positive: &[f64], negative: &[f64]) -> Result<()> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptyClass(format!(
            "AUC needs both classes ({} positive, {} negative)",
            positive.len(),
            negative.len()
        )));
    }
    if positive.iter().chain(negative).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("AUC scores".into()));
    }
    Ok(())
}
