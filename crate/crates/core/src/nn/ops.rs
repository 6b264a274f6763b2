//! Elementwise activations, the softmax/cross-entropy pair, and seeded
//! weight initialization.

use rand::Rng;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Derivative of sigmoid expressed in its output `y = sigmoid(x)`.
#[inline]
pub fn dsigmoid_from_y(y: f64) -> f64 {
    y * (1.0 - y)
}

/// Derivative of tanh expressed in its output `y = tanh(x)`.
#[inline]
pub fn dtanh_from_y(y: f64) -> f64 {
    1.0 - y * y
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Negative log-likelihood of the target class, clamped away from log(0).
pub fn cross_entropy(probs: &[f64], target: usize) -> f64 {
    -(probs[target].max(1e-12)).ln()
}

/// Gradient of cross-entropy w.r.t. the softmax logits: `p - onehot(target)`.
pub fn softmax_ce_grad(probs: &[f64], target: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[target] -= 1.0;
    g
}

/// Glorot/Xavier uniform initializer for a (fan_out, fan_in) weight matrix.
pub fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> impl FnMut() -> f64 + '_ {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    move || rng.random_range(-a..a)
}

/// Shuffled mini-batch index lists for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
