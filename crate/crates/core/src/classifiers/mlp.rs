//! Fully connected network `d → 150 → 100 → 50 → 1`, ReLU hidden layers,
//! sigmoid output, mean binary cross-entropy, full-batch Adam.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const HIDDEN_LAYERS: [usize; 3] = [150, 100, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: HIDDEN_LAYERS.to_vec(),
            epochs: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl MlpModel {
    /// Uniform fan-in initialization, `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.gen_range(-limit..limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Pre-activations of every layer, and the activations feeding each one.
    fn forward(&self, x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            let next = if k + 1 < self.layers.len() {
                z.mapv(|v| v.max(0.0))
            } else {
                z.clone()
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        (pre, inputs)
    }

    /// Output logits, one per row.
    pub fn logits(&self, x: &Array2<f64>) -> Vec<f64> {
        let (pre, _) = self.forward(x);
        pre.last().expect("output layer").column(0).to_vec()
    }

    /// Sigmoid outputs in (0, 1).
    pub fn predict_proba(&self, x: &Array2<f64>) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    /// Mean binary cross-entropy and its exact gradient.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, y: &[bool]) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let (pre, inputs) = self.forward(x);
        let z = pre.last().expect("output layer");
        let loss = z
            .column(0)
            .iter()
            .zip(y)
            .map(|(&zi, &yi)| softplus(zi) - if yi { zi } else { 0.0 })
            .sum::<f64>()
            / n;

        let mut delta = Array2::from_shape_fn((y.len(), 1), |(i, _)| {
            (sigmoid(z[[i, 0]]) - if y[i] { 1.0 } else { 0.0 }) / n
        });
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = inputs[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let back = delta.dot(&self.layers[k].weights.t());
                let mask = &pre[k - 1];
                delta = Array2::from_shape_fn(back.dim(), |(i, j)| {
                    if mask[[i, j]] > 0.0 {
                        back[[i, j]]
                    } else {
                        0.0
                    }
                });
            }
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    pub fn loss(&self, x: &Array2<f64>, y: &[bool]) -> f64 {
        let z = self.logits(x);
        z.iter()
            .zip(y)
            .map(|(&zi, &yi)| softplus(zi) - if yi { zi } else { 0.0 })
            .sum::<f64>()
            / x.nrows() as f64
    }

    /// All parameters, layer by layer (weights row-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter count");
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = it.next().unwrap();
            }
            for b in layer.bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Training output: the model and the loss before each epoch's update.
#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: MlpModel,
    pub loss_history: Vec<f64>,
}

pub fn mlp_train(x: &Array2<f64>, y: &[bool], config: &MlpConfig) -> Result<MlpFit> {
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
    let mut model = MlpModel::init(x.ncols(), &config.hidden, config.seed);
    let mut m: Vec<Dense> = model.layers.iter().map(zeros_like).collect();
    let mut v: Vec<Dense> = model.layers.iter().map(zeros_like).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (loss, grads) = model.loss_and_gradient(x, y);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("MLP loss diverged at epoch {epoch}")));
        }
        history.push(loss);
        let t = epoch as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for ((layer, g), (mk, vk)) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut mk.weights)
                .and(&mut vk.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut mk.bias)
                .and(&mut vk.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
    if model.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
        return Err(Error::Numeric("MLP weights became non-finite".into()));
    }
    Ok(MlpFit {
        model,
        loss_history: history,
    })
}

fn zeros_like(d: &Dense) -> Dense {
    Dense {
        weights: Array2::zeros(d.weights.dim()),
        bias: Array1::zeros(d.bias.len()),
    }
}
