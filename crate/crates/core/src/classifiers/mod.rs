//! Feature normalization and the three classifier families.

pub mod forest;
pub mod mlp;
pub mod normalize;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub use forest::{rf_train, RfConfig, RfModel};
pub use mlp::{mlp_train, MlpConfig, MlpModel};
pub use normalize::Normalizer;
pub use svm::{svm_grid_search, svm_train, GridSearch, SmoConfig, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Rf,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [Self::Svm, Self::Rf, Self::Mlp];

    /// Decision threshold on the score: SVM decision value 0, vote fraction
    /// or probability 0.5.
    pub fn threshold(self) -> f64 {
        match self {
            Self::Svm => 0.0,
            Self::Rf | Self::Mlp => 0.5,
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Svm => "svm",
            Self::Rf => "rf",
            Self::Mlp => "mlp",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(Self::Svm),
            "rf" => Ok(Self::Rf),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::Config(format!(
                "unknown classifier '{other}' (expected svm, rf or mlp)"
            ))),
        }
    }
}

/// Hyperparameters for every family. Defaults are the fixed experimental ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub smo: SmoConfig,
    /// Seeds the CV fold assignment of the SVM grid search.
    pub cv_seed: u64,
    pub rf: RfConfig,
    pub mlp: MlpConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            c_grid: svm::C_GRID.to_vec(),
            gamma_grid: svm::GAMMA_GRID.to_vec(),
            smo: SmoConfig::default(),
            cv_seed: 0,
            rf: RfConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Svm { model: SvmModel, search: GridSearch },
    Rf(RfModel),
    Mlp { model: MlpModel, final_loss: f64 },
}

impl TrainedModel {
    /// Fits one model on already-normalized features.
    pub fn train(kind: ClassifierKind, x: &Array2<f64>, y: &[bool], opts: &TrainOptions) -> Result<Self> {
        match kind {
            ClassifierKind::Svm => {
                let search = svm_grid_search(x, y, &opts.c_grid, &opts.gamma_grid, opts.cv_seed, &opts.smo)?;
                let model = svm_train(x, y, search.best, &opts.smo)?;
                Ok(Self::Svm { model, search })
            }
            ClassifierKind::Rf => Ok(Self::Rf(rf_train(x, y, &opts.rf)?)),
            ClassifierKind::Mlp => {
                let fit = mlp_train(x, y, &opts.mlp)?;
                Ok(Self::Mlp {
                    model: fit.model,
                    final_loss: fit.loss_history.last().copied().unwrap_or(f64::NAN),
                })
            }
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Svm { .. } => ClassifierKind::Svm,
            Self::Rf(_) => ClassifierKind::Rf,
            Self::Mlp { .. } => ClassifierKind::Mlp,
        }
    }

    pub fn score(&self, x: &Array2<f64>) -> Result<ScoreSet> {
        let scores = match self {
            Self::Svm { model, .. } => model.decision_function(x),
            Self::Rf(model) => model.score(&x.as_standard_layout().to_owned()),
            Self::Mlp { model, .. } => model.predict_proba(x),
        };
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("{} scores", self.kind())));
        }
        Ok(ScoreSet::new(self.kind(), scores))
    }

    /// Audit summary: hyperparameters and fit diagnostics.
    pub fn summary(&self) -> serde_json::Value {
        match self {
            Self::Svm { model, search } => json!({
                "classifier": "svm",
                "kernel": "rbf",
                "c": model.params.c,
                "gamma": model.params.gamma,
                "n_support": model.n_support(),
                "bias": model.bias,
                "smo_iterations": model.iterations,
                "converged": model.converged,
                "cv_accuracy": search.cv_accuracy,
                "cv_table": search.cells,
            }),
            Self::Rf(model) => json!({
                "classifier": "rf",
                "n_trees": model.trees.len(),
                "max_features": model.max_features,
                "seed": model.config.seed,
                "bootstrap": model.config.bootstrap,
                "total_nodes": model.trees.iter().map(|t| t.n_nodes()).sum::<usize>(),
                "max_depth": model.trees.iter().map(|t| t.depth()).max().unwrap_or(0),
            }),
            Self::Mlp { model, final_loss } => json!({
                "classifier": "mlp",
                "layers": std::iter::once(model.input_dim())
                    .chain(model.layers.iter().map(|l| l.bias.len()))
                    .collect::<Vec<_>>(),
                "n_params": model.n_params(),
                "final_loss": final_loss,
            }),
        }
    }
}

/// Continuous scores and the hard predictions derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub model: ClassifierKind,
    pub scores: Vec<f64>,
    pub predictions: Vec<bool>,
    pub threshold: f64,
}

impl ScoreSet {
    pub fn new(model: ClassifierKind, scores: Vec<f64>) -> Self {
        let threshold = model.threshold();
        let predictions = scores.iter().map(|&s| s >= threshold).collect();
        Self {
            model,
            scores,
            predictions,
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
