//! Random forest of fully grown Gini trees with bootstrap resampling.
//!
//! Tree `t` draws from its own generator seeded with output `t` of a
//! splitmix64 stream started at the forest seed.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const N_TREES: usize = 100;
pub const DEFAULT_SEED: u64 = 42;
/// Nodes with fewer samples than this become leaves.
pub const MIN_SAMPLES_SPLIT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub n_trees: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: N_TREES,
            seed: DEFAULT_SEED,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { positive: bool },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// A single-leaf tree voting `positive` everywhere.
    pub fn constant(positive: bool) -> Self {
        Self {
            nodes: vec![Node::Leaf { positive }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { positive } => return positive,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub max_features: usize,
    pub config: RfConfig,
}

impl RfModel {
    pub fn from_trees(trees: Vec<Tree>, max_features: usize) -> Self {
        let n_trees = trees.len();
        Self {
            trees,
            max_features,
            config: RfConfig {
                n_trees,
                ..RfConfig::default()
            },
        }
    }

    /// Fraction of trees voting positive.
    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn score(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.vote_fraction(r.as_slice().expect("row-major input")))
            .collect()
    }
}

/// `max(1, floor(sqrt(d)))` features examined per split.
pub fn max_features(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

pub fn rf_train(x: &Array2<f64>, y: &[bool], config: &RfConfig) -> Result<RfModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels vs rows".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let n_pos = y.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::EmptyClass("training set has a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    let x = x.as_standard_layout();
    let data = x.as_slice().expect("standard layout");
    let d = x.ncols();
    let mf = max_features(d);
    let seeds = rng::splitmix_stream(config.seed, config.n_trees);
    let trees = seeds
        .into_iter()
        .map(|seed| {
            let mut rng = rng::seeded(seed);
            let n = y.len();
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder {
                data,
                d,
                y,
                max_features: mf,
                rng,
                nodes: Vec::new(),
            }
            .build(sample)
        })
        .collect();
    Ok(RfModel {
        trees,
        max_features: mf,
        config: *config,
    })
}

struct TreeBuilder<'a> {
    data: &'a [f64],
    d: usize,
    y: &'a [bool],
    max_features: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_> {
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.data[sample * self.d + feature]
    }

    fn build(mut self, root: Vec<usize>) -> Tree {
        self.nodes.push(Node::Leaf { positive: false });
        let mut stack = vec![(0usize, root)];
        while let Some((at, samples)) = stack.pop() {
            let n_pos = samples.iter().filter(|&&s| self.y[s]).count();
            let majority = 2 * n_pos >= samples.len();
            let pure = n_pos == 0 || n_pos == samples.len();
            if pure || samples.len() < MIN_SAMPLES_SPLIT {
                self.nodes[at] = Node::Leaf { positive: majority };
                continue;
            }
            match self.best_split(&samples) {
                None => self.nodes[at] = Node::Leaf { positive: majority },
                Some(split) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .iter()
                        .partition(|&&s| self.value(s, split.feature) <= split.threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { positive: false });
                    let right = self.nodes.len();
                    self.nodes.push(Node::Leaf { positive: false });
                    self.nodes[at] = Node::Split {
                        feature: split.feature,
                        threshold: split.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        Tree { nodes: self.nodes }
    }

    /// Examines features in random order until `max_features` non-constant
    /// ones have been scored; returns the lowest weighted Gini split.
    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let mut features: Vec<usize> = (0..self.d).collect();
        features.shuffle(&mut self.rng);
        let total_pos = samples.iter().filter(|&&s| self.y[s]).count();
        let n = samples.len();
        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in features {
            if visited >= self.max_features {
                break;
            }
            sorted.clear();
            sorted.extend(samples.iter().map(|&s| (self.value(s, f), self.y[s])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue;
            }
            visited += 1;
            let mut left_pos = 0usize;
            for i in 0..n - 1 {
                left_pos += usize::from(sorted[i].1);
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let right_pos = (total_pos - left_pos) as f64;
                let gini = |pos: f64, cnt: f64| {
                    let p = pos / cnt;
                    2.0 * p * (1.0 - p)
                };
                let impurity = nl * gini(left_pos as f64, nl) + nr * gini(right_pos, nr);
                if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                    let mut threshold = 0.5 * (sorted[i].0 + sorted[i + 1].0);
                    if threshold >= sorted[i + 1].0 {
                        threshold = sorted[i].0;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sign_data() -> (Array2<f64>, Vec<bool>) {
        let xs: Vec<f64> = (0..40).map(|i| if i < 20 { -5.0 + i as f64 * 0.1 } else { 1.0 + i as f64 * 0.1 }).collect();
        let y = xs.iter().map(|&v| v > 0.0).collect();
        (Array2::from_shape_vec((40, 1), xs).unwrap(), y)
    }

    #[test]
    fn separable_1d_is_fit_exactly() {
        let (x, y) = sign_data();
        let m = rf_train(&x, &y, &RfConfig::default()).unwrap();
        assert_eq!(m.trees.len(), 100);
        let s = m.score(&x);
        for (score, label) in s.iter().zip(&y) {
            assert_eq!(*score >= 0.5, *label);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let y: Vec<bool> = (0..30).map(|i| (i * 5) % 3 == 0).collect();
        let a = rf_train(&x, &y, &RfConfig::default()).unwrap();
        let b = rf_train(&x, &y, &RfConfig::default()).unwrap();
        assert_eq!(a, b);
        let probe = Array2::from_shape_fn((10, 4), |(i, j)| (i as f64 - j as f64) * 0.7);
        assert_eq!(a.score(&probe), b.score(&probe));
        assert_eq!(a.max_features, 2);
    }

    #[test]
    fn vote_fraction_definition() {
        let trees = (0..100).map(|t| Tree::constant(t < 63)).collect();
        let m = RfModel::from_trees(trees, 1);
        assert_eq!(m.vote_fraction(&[0.0]), 0.63);
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((3, 1));
        assert!(rf_train(&x, &[true; 3], &RfConfig::default()).is_err());
    }

    #[test]
    fn no_split_on_constant_features() {
        let x = Array2::zeros((4, 2));
        let m = rf_train(&x, &[true, false, true, false], &RfConfig::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.n_nodes() == 1));
    }
}
