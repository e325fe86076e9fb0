use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MlpModel, Mode};
use crate::Result;

/// Gradients smaller than this in magnitude are compared by absolute
/// difference instead of relative error.
pub const GRADIENT_FLOOR: f64 = 1e-6;
/// Largest absolute difference accepted for gradients below the floor.
pub const ABSOLUTE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|)` among parameters at or above the floor.
    pub max_relative_error: f64,
    /// Largest `|a - n|` among parameters below the floor.
    pub max_absolute_error: f64,
    pub checked: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance && self.max_absolute_error < ABSOLUTE_TOLERANCE
    }
}

/// Compares the backpropagated gradient of the mean inference-mode loss with
/// central differences `(L(θ+ε) - L(θ-ε)) / 2ε`. Checks every parameter when
/// `n_params` covers them all, otherwise a seeded sample.
pub fn gradient_check(
    model: &MlpModel,
    batch: &[(&[f64], f64)],
    epsilon: f64,
    n_params: usize,
    seed: u64,
) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_gradient(batch, Mode::Infer)?;
    let total = grads.len();
    let mut checked: Vec<usize> = if n_params >= total {
        (0..total).collect()
    } else {
        sample(&mut ChaCha8Rng::seed_from_u64(seed), total, n_params).into_vec()
    };
    checked.sort_unstable();
    let mut probe = model.clone();
    let mut analytic = Vec::with_capacity(checked.len());
    let mut numeric = Vec::with_capacity(checked.len());
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    for &i in &checked {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let up = probe.loss(batch)?;
        probe.params_mut()[i] = orig - epsilon;
        let down = probe.loss(batch)?;
        probe.params_mut()[i] = orig;
        let n = (up - down) / (2.0 * epsilon);
        let a = grads[i];
        let diff = (a - n).abs();
        let scale = a.abs().max(n.abs());
        if scale >= GRADIENT_FLOOR {
            max_rel = max_rel.max(diff / scale);
        } else {
            max_abs = max_abs.max(diff);
        }
        analytic.push(a);
        numeric.push(n);
    }
    Ok(GradCheck {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        checked,
        analytic,
        numeric,
    })
}
