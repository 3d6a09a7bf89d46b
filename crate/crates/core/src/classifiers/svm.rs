//! RBF support vector machine trained by SMO, with the cross-validated
//! (C, γ) grid search.
//!
//! The dual problem is
//!
//! ```text
//! min_α  ½ αᵀQα − Σα    s.t.  0 ≤ α_i ≤ C,  Σ y_i α_i = 0
//! ```
//!
//! with `Q_ij = y_i y_j exp(−γ‖x_i − x_j‖²)`. Each SMO step takes the
//! maximal violating pair and solves its two-variable subproblem exactly.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const C_GRID: [f64; 6] = [1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];
pub const GAMMA_GRID: [f64; 5] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];
pub const CV_FOLDS: usize = 5;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoConfig {
    /// Stop once the maximal KKT violation m(α) − M(α) falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Squared Euclidean distances between rows of `a` and rows of `b`.
pub fn squared_distances(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut d = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            d[[i, j]] = sq_dist(ra, rb);
        }
    }
    d
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf_kernel(a: &Array2<f64>, b: &Array2<f64>, gamma: f64) -> Array2<f64> {
    squared_distances(a, b).mapv_into(|d| (-gamma * d).exp())
}

/// Result of solving the dual for a fixed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset `b` in `f(x) = Σ α_i y_i K(x_i, x) + b`.
    pub bias: f64,
    pub objective: f64,
    /// m(α) − M(α) at termination.
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// ½ αᵀQα − Σα for kernel `k` and labels `y ∈ {−1, +1}`.
pub fn dual_objective(k: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair: (i, j, m − M).
fn select_pair(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> Option<(usize, usize, f64)> {
    let mut i = None;
    let mut m = f64::NEG_INFINITY;
    let mut j = None;
    let mut big_m = f64::INFINITY;
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(y[t], alpha[t], c) && v > m {
            m = v;
            i = Some(t);
        }
        if in_low(y[t], alpha[t], c) && v < big_m {
            big_m = v;
            j = Some(t);
        }
    }
    Some((i?, j?, m - big_m))
}

/// m(α) − M(α) for an arbitrary feasible α; 0 when one index set is empty.
pub fn kkt_violation(k: &Array2<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[[i, j]] * alpha[j]).sum::<f64>() - 1.0)
        .collect();
    select_pair(y, alpha, &grad, c).map_or(0.0, |(_, _, gap)| gap.max(0.0))
}

/// Solves the SVM dual by SMO for a precomputed kernel matrix.
pub fn solve_dual(k: &Array2<f64>, y: &[f64], c: f64, cfg: &SmoConfig) -> DualSolution {
    solve_dual_from(k, y, c, cfg, vec![0.0; y.len()])
}

/// SMO started from a feasible `alpha` (`0 ≤ α ≤ C`, `Σ α_i y_i = 0`).
pub fn solve_dual_from(k: &Array2<f64>, y: &[f64], c: f64, cfg: &SmoConfig, mut alpha: Vec<f64>) -> DualSolution {
    let n = y.len();
    let k = k.as_standard_layout();
    let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
    let mut grad = vec![-1.0; n];
    for (j, &aj) in alpha.iter().enumerate() {
        if aj != 0.0 {
            let row = k.row(j);
            for t in 0..n {
                grad[t] += y[t] * y[j] * row[t] * aj;
            }
        }
    }
    let mut iterations = 0;
    let mut max_violation = f64::INFINITY;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let Some((i, j, gap)) = select_pair(y, &alpha, &grad, c) else {
            max_violation = 0.0;
            converged = true;
            break;
        };
        max_violation = gap;
        if gap < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (wi, wj) = (y[i] * (alpha[i] - old_i), y[j] * (alpha[j] - old_j));
        let (ki, kj) = (k.row(i), k.row(j));
        let (ki, kj) = (ki.as_slice().expect("standard layout"), kj.as_slice().expect("standard layout"));
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * wi + kj[t] * wj);
        }
    }
    if !converged {
        if let Some((_, _, gap)) = select_pair(y, &alpha, &grad, c) {
            max_violation = gap;
        }
    }

    let bias = -compute_rho(y, &alpha, &grad, c);
    let objective = 0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();
    DualSolution {
        alpha,
        bias,
        objective,
        max_violation,
        iterations,
        converged,
    }
}

fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
}

/// A trained RBF-SVM. Only support vectors (α > 0) are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    pub support_vectors: Array2<f64>,
    /// α_i · y_i for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }

    /// Signed decision values; positive means the positive class.
    pub fn decision_function(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.support_vectors
                    .rows()
                    .into_iter()
                    .zip(&self.dual_coef)
                    .map(|(sv, coef)| coef * (-self.params.gamma * sq_dist(sv, row)).exp())
                    .sum::<f64>()
                    + self.bias
            })
            .collect()
    }
}

pub(crate) fn signed_labels(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect()
}

fn check_inputs(x: &Array2<f64>, y: &[bool]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "labels vs rows".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    let n_pos = y.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::EmptyClass("training set has a single class".into()));
    }
    Ok(())
}

fn model_from_solution(x: &Array2<f64>, y: &[f64], sol: &DualSolution, params: SvmParams) -> SvmModel {
    let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    SvmModel {
        params,
        support_vectors: x.select(ndarray::Axis(0), &sv),
        dual_coef: sv.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        bias: sol.bias,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

pub fn svm_train(x: &Array2<f64>, y: &[bool], params: SvmParams, cfg: &SmoConfig) -> Result<SvmModel> {
    check_inputs(x, y)?;
    if !(params.c > 0.0 && params.gamma > 0.0) {
        return Err(Error::Config(format!("invalid SVM params {params:?}")));
    }
    let ys = signed_labels(y);
    let k = rbf_kernel(x, x, params.gamma);
    let sol = solve_dual(&k, &ys, params.c, cfg);
    if !sol.converged {
        log::warn!(
            "SMO hit the {} iteration cap (violation {:.3e})",
            cfg.max_iter,
            sol.max_violation
        );
    }
    Ok(model_from_solution(x, &ys, &sol, params))
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut fold = vec![0; y.len()];
    let mut rng = rng::seeded(seed);
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(Error::StratumTooSmall {
                stratum: format!("class {class} for {k}-fold CV"),
                size: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// All cells in row-major (C outer, γ inner) order.
    pub cells: Vec<CvCell>,
    pub best: SvmParams,
    pub cv_accuracy: f64,
}

/// Picks the first cell with the highest accuracy, in row-major order.
pub fn select_best(cells: &[CvCell]) -> Option<&CvCell> {
    cells.iter().fold(None, |best: Option<&CvCell>, cell| match best {
        Some(b) if b.accuracy >= cell.accuracy => Some(b),
        _ => Some(cell),
    })
}

/// Exhaustive stratified 5-fold grid search over [`C_GRID`] × [`GAMMA_GRID`]
/// scored by mean fold accuracy.
pub fn svm_grid_search(
    x: &Array2<f64>,
    y: &[bool],
    c_grid: &[f64],
    gamma_grid: &[f64],
    seed: u64,
    cfg: &SmoConfig,
) -> Result<GridSearch> {
    check_inputs(x, y)?;
    let folds = stratified_folds(y, CV_FOLDS, seed)?;
    let ys = signed_labels(y);
    let dist = squared_distances(x, x);
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..CV_FOLDS)
        .map(|f| (0..y.len()).partition(|&i| folds[i] != f))
        .collect();

    // C ascending within each (γ, fold) so each solve warm-starts from the last
    let mut c_order: Vec<usize> = (0..c_grid.len()).collect();
    c_order.sort_by(|&a, &b| c_grid[a].total_cmp(&c_grid[b]));
    let jobs: Vec<(usize, usize)> = (0..gamma_grid.len())
        .flat_map(|g| (0..CV_FOLDS).map(move |f| (g, f)))
        .collect();
    let fold_acc: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let gamma = gamma_grid[g];
            let (train, test) = &split[f];
            let k = Array2::from_shape_fn((train.len(), train.len()), |(a, b)| {
                (-gamma * dist[[train[a], train[b]]]).exp()
            });
            let yt: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
            let mut acc = vec![0.0; c_grid.len()];
            let mut alpha = vec![0.0; train.len()];
            for &ci in &c_order {
                let sol = solve_dual_from(&k, &yt, c_grid[ci], cfg, alpha);
                let correct = test
                    .iter()
                    .filter(|&&t| {
                        let f: f64 = train
                            .iter()
                            .enumerate()
                            .filter(|(a, _)| sol.alpha[*a] > 0.0)
                            .map(|(a, &i)| sol.alpha[a] * yt[a] * (-gamma * dist[[i, t]]).exp())
                            .sum::<f64>()
                            + sol.bias;
                        (f >= 0.0) == y[t]
                    })
                    .count();
                acc[ci] = correct as f64 / test.len() as f64;
                alpha = sol.alpha;
            }
            acc
        })
        .collect();
    let mut cells = Vec::with_capacity(c_grid.len() * gamma_grid.len());
    for (ci, &c) in c_grid.iter().enumerate() {
        for (g, &gamma) in gamma_grid.iter().enumerate() {
            let total: f64 = (0..CV_FOLDS).map(|f| fold_acc[g * CV_FOLDS + f][ci]).sum();
            cells.push(CvCell {
                c,
                gamma,
                accuracy: total / CV_FOLDS as f64,
            });
        }
    }
    let best = select_best(&cells).ok_or_else(|| Error::Config("empty SVM grid".into()))?;
    Ok(GridSearch {
        best: SvmParams {
            c: best.c,
            gamma: best.gamma,
        },
        cv_accuracy: best.accuracy,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn tight() -> SmoConfig {
        SmoConfig {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }

    #[test]
    fn symmetric_pair() {
        let x = arr2(&[[-1.0], [1.0]]);
        let m = svm_train(&x, &[false, true], SvmParams { c: 1.0, gamma: 1.0 }, &SmoConfig::default())
            .unwrap();
        let f = m.decision_function(&x);
        assert!(f[0] < 0.0 && f[1] > 0.0);
        let probe = arr2(&[[-0.3], [0.3], [-2.0], [2.0]]);
        let g = m.decision_function(&probe);
        assert!((g[0] + g[1]).abs() < 1e-12);
        assert!((g[2] + g[3]).abs() < 1e-12);
    }

    #[test]
    fn dual_feasibility() {
        let x = arr2(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.4], [0.2, 0.9]]);
        let y = [false, false, true, true, false, true];
        let ys = signed_labels(&y);
        let k = rbf_kernel(&x, &x, 1.0);
        let sol = solve_dual(&k, &ys, 10.0, &SmoConfig::default());
        assert!(sol.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
        let eq: f64 = sol.alpha.iter().zip(&ys).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-8);
        assert!(sol.max_violation < 1e-3);
        assert!((sol.objective - dual_objective(&k, &ys, &sol.alpha)).abs() < 1e-9);
        assert!(kkt_violation(&k, &ys, &sol.alpha, 10.0) < 1e-3);
    }

    #[test]
    fn duplication_leaves_decision_unchanged() {
        // Separable with C large enough that no multiplier reaches the bound.
        let x = arr2(&[[-2.0, 0.0], [-1.5, 1.0], [-1.0, -1.0], [1.0, 0.5], [2.0, -0.5], [1.5, 1.5]]);
        let y = [false, false, false, true, true, true];
        let p = SvmParams { c: 1000.0, gamma: 0.5 };
        let a = svm_train(&x, &y, p, &tight()).unwrap();
        assert!(a.dual_coef.iter().all(|c| c.abs() < p.c));
        let mut xx = x.clone();
        xx.append(ndarray::Axis(0), x.view()).unwrap();
        let yy: Vec<bool> = y.iter().chain(&y).copied().collect();
        let b = svm_train(&xx, &yy, p, &tight()).unwrap();
        let grid = Array2::from_shape_fn((49, 2), |(i, j)| {
            if j == 0 { -3.0 + (i / 7) as f64 } else { -3.0 + (i % 7) as f64 }
        });
        for (fa, fb) in a.decision_function(&grid).iter().zip(b.decision_function(&grid)) {
            assert!((fa - fb).abs() < 1e-6, "{fa} vs {fb}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = arr2(&[[0.0], [1.0]]);
        let p = SvmParams { c: 1.0, gamma: 1.0 };
        assert!(svm_train(&x, &[true, true], p, &SmoConfig::default()).is_err());
        let x = arr2(&[[0.0], [f64::NAN]]);
        assert!(svm_train(&x, &[true, false], p, &SmoConfig::default()).is_err());
    }

    #[test]
    fn tie_break_is_first_cell() {
        let cells: Vec<CvCell> = C_GRID
            .iter()
            .flat_map(|&c| GAMMA_GRID.iter().map(move |&gamma| CvCell { c, gamma, accuracy: 0.5 }))
            .collect();
        let best = select_best(&cells).unwrap();
        assert_eq!((best.c, best.gamma), (1e-2, 1.0));
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<bool> = (0..23).map(|i| i % 3 == 0).collect();
        let f = stratified_folds(&y, 5, 0).unwrap();
        for k in 0..5 {
            assert!((0..23).any(|i| f[i] == k && y[i]));
            assert!((0..23).any(|i| f[i] == k && !y[i]));
        }
        assert!(stratified_folds(&[true, true, false, false, false, false, false], 5, 0).is_err());
    }
}
