//! Fully connected binary classifier: rectifier hidden layers with inverted
//! dropout, a single logistic output unit, binary cross-entropy loss and
//! Adam updates.
//!
//! All parameters live in one flat vector. Layer `l` occupies
//! `out_l * in_l` weights (row-major, one row per output unit) followed by
//! `out_l` biases.

mod adam;
mod gradcheck;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheck, GRADIENT_FLOOR};
pub use train::{split_indices, train, EpochRecord, Partition, TrainConfig, TrainRun};

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{ln, sigmoid, sqrt};
use crate::space::FeatureVector;
use crate::{Error, Result};

/// Hidden layer widths: five layers alternating 70 and 30 units.
pub const DEFAULT_HIDDEN: [usize; 5] = [70, 30, 70, 30, 70];
pub const DEFAULT_DROPOUT: f64 = 0.5;
/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Per-feature z-score computed on the training partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; zero-variance features are only centered.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = sqrt(v / n);
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `[input, hidden..., 1]`.
    layout: Vec<usize>,
    params: Vec<f64>,
    pub dropout: f64,
    pub seed: u64,
    #[serde(default)]
    pub scaler: Option<Standardizer>,
}

/// Forward-pass mode. Training mode drops each hidden unit with probability
/// `dropout` and scales the survivors by `1 / (1 - dropout)`.
pub enum Mode<'r> {
    Infer,
    Train(&'r mut ChaCha8Rng),
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input (after standardization) and every hidden layer's output.
    pub activations: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pub pre_activations: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden unit (`0` or `1 / keep`; all `1` in inference).
    pub masks: Vec<Vec<f64>>,
    pub logit: f64,
    pub prob: f64,
}

pub fn param_count(layout: &[usize]) -> usize {
    layout.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// The default network for `input_dim` features.
pub fn init_model(input_dim: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::new(input_dim, &DEFAULT_HIDDEN, DEFAULT_DROPOUT, seed)
}

impl MlpModel {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn new(input_dim: usize, hidden: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidParameter(alloc::format!(
                "dropout must be in [0, 1), got {dropout}"
            )));
        }
        let mut layout = Vec::with_capacity(hidden.len() + 2);
        layout.push(input_dim);
        layout.extend_from_slice(hidden);
        layout.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&layout));
        for w in layout.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = sqrt(6.0 / fan_in as f64);
            for _ in 0..fan_in * fan_out {
                params.push((rng.random::<f64>() * 2.0 - 1.0) * limit);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Ok(MlpModel {
            layout,
            params,
            dropout,
            seed,
            scaler: None,
        })
    }

    /// Checks internal consistency (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        if self.layout.len() < 2 || self.layout.contains(&0) || *self.layout.last().unwrap() != 1 {
            return Err(Error::InvalidParameter(alloc::format!("bad layout {:?}", self.layout)));
        }
        if self.params.len() != param_count(&self.layout) {
            return Err(Error::DimensionMismatch {
                expected: param_count(&self.layout),
                actual: self.params.len(),
            });
        }
        if let Some(s) = &self.scaler {
            if s.mean.len() != self.input_dim() || s.std.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    actual: s.mean.len(),
                });
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layout[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix and bias vector of layer `l`.
    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset: usize = param_count(&self.layout[..=l]);
        let (n_in, n_out) = (self.layout[l], self.layout[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (w, b)
    }

    fn n_layers(&self) -> usize {
        self.layout.len() - 1
    }

    pub fn forward_trace(&self, x: &[f64], mode: Mode<'_>) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let input = match &self.scaler {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        let keep = 1.0 - self.dropout;
        let mut rng = match mode {
            Mode::Train(rng) if self.dropout > 0.0 => Some(rng),
            _ => None,
        };
        let mut activations = vec![input];
        let mut pre_activations = Vec::new();
        let mut masks = Vec::new();
        let mut logit = 0.0;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let a = activations.last().unwrap();
            let n_in = a.len();
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(a).fold(bias, |acc, (wi, ai)| acc + wi * ai)
                })
                .collect();
            if l + 1 == self.n_layers() {
                logit = z[0];
                break;
            }
            let mask: Vec<f64> = match rng.as_deref_mut() {
                Some(r) => (0..z.len())
                    .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
                None => vec![1.0; z.len()],
            };
            let out = z.iter().zip(&mask).map(|(&zi, &mi)| zi.max(0.0) * mi).collect();
            pre_activations.push(z);
            masks.push(mask);
            activations.push(out);
        }
        let prob = sigmoid(logit).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        Ok(Trace {
            activations,
            pre_activations,
            masks,
            logit,
            prob,
        })
    }

    /// Probability of the positive class.
    pub fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<f64> {
        self.forward_trace(x, mode).map(|t| t.prob)
    }

    /// Accumulates `scale * dL/dparams` for one trace into `grads`, given
    /// `dL/dlogit`.
    fn backward(&self, trace: &Trace, dlogit: f64, scale: f64, grads: &mut [f64]) {
        let mut delta = vec![dlogit * scale];
        for l in (0..self.n_layers()).rev() {
            let offset = param_count(&self.layout[..=l]);
            let (n_in, n_out) = (self.layout[l], self.layout[l + 1]);
            let a_prev = &trace.activations[l];
            let (w, _) = self.layer(l);
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grads[offset + o * n_in..offset + (o + 1) * n_in];
                    for (gi, ai) in g.iter_mut().zip(a_prev) {
                        *gi += d * ai;
                    }
                }
                grads[offset + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let z = &trace.pre_activations[l - 1];
            let mask = &trace.masks[l - 1];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += wi * d;
                }
            }
            for ((p, &zi), &mi) in prev.iter_mut().zip(z).zip(mask) {
                *p = if zi > 0.0 { *p * mi } else { 0.0 };
            }
            delta = prev;
        }
    }

    /// Mean binary cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], f64)], mut mode: Mode<'_>) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let mut grads = vec![0.0; self.params.len()];
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(x, y) in batch {
            let m = match &mut mode {
                Mode::Infer => Mode::Infer,
                Mode::Train(rng) => Mode::Train(rng),
            };
            let trace = self.forward_trace(x, m)?;
            loss += bce_loss(trace.prob, y);
            self.backward(&trace, sigmoid(trace.logit) - y, scale, &mut grads);
        }
        Ok((loss * scale, grads))
    }

    /// Mean inference-mode loss.
    pub fn loss(&self, batch: &[(&[f64], f64)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let mut total = 0.0;
        for &(x, y) in batch {
            total += bce_loss(self.forward(x, Mode::Infer)?, y);
        }
        Ok(total / batch.len() as f64)
    }
}

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped away from 0 and 1.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * ln(p) + (1.0 - y) * ln(1.0 - p))
}

/// Inference-mode probabilities, one per vector, in order.
pub fn predict(model: &MlpModel, vectors: &[FeatureVector]) -> Result<Vec<f64>> {
    vectors.iter().map(|v| model.forward(&v.values, Mode::Infer)).collect()
}
