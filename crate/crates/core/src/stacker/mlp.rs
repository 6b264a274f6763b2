//! The meta-classifier: a single-hidden-layer perceptron with rectified
//! activation and a softmax output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::ops::{cross_entropy, glorot, softmax, softmax_ce_grad};
use crate::nn::Bundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    pub bundle: Bundle,
}

impl MlpParams {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut bundle = Bundle::new();
        bundle.add_matrix("w1", hidden, input, glorot(rng, input, hidden));
        bundle.add_vector("b1", hidden, || 0.0);
        bundle.add_matrix("w2", 3, hidden, glorot(rng, hidden, 3));
        bundle.add_vector("b2", 3, || 0.0);
        MlpParams {
            input,
            hidden,
            bundle,
        }
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> [f64; 3] {
    let (probs, _) = forward_trace(params, x);
    probs
}

fn forward_trace(params: &MlpParams, x: &[f64]) -> ([f64; 3], Vec<f64>) {
    debug_assert_eq!(x.len(), params.input);
    let w1 = params.bundle.get("w1");
    let b1 = params.bundle.get("b1");
    let w2 = params.bundle.get("w2");
    let b2 = params.bundle.get("b2");
    let mut hidden = vec![0.0; params.hidden];
    for (i, h) in hidden.iter_mut().enumerate() {
        let z = b1.data[i]
            + w1.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        *h = z.max(0.0);
    }
    let mut logits = [0.0; 3];
    for (k, logit) in logits.iter_mut().enumerate() {
        *logit = b2.data[k]
            + w2.row(k).iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>();
    }
    let p = softmax(&logits);
    ([p[0], p[1], p[2]], hidden)
}

/// Mean cross-entropy and its gradient over a batch of (row, target) pairs.
pub fn mlp_batch_grad(
    params: &MlpParams,
    rows: &[&[f64]],
    targets: &[usize],
) -> (Bundle, f64) {
    let mut grads = params.bundle.zeros_like();
    let scale = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    let w2 = params.bundle.get("w2");
    for (x, &t) in rows.iter().zip(targets) {
        let (probs, hidden) = forward_trace(params, x);
        total += cross_entropy(&probs, t);
        let dlogits = softmax_ce_grad(&probs, t);
        {
            let gw2 = grads.get_mut("w2");
            for k in 0..3 {
                let g = dlogits[k] * scale;
                for (gv, h) in gw2.row_mut(k).iter_mut().zip(&hidden) {
                    *gv += g * h;
                }
            }
        }
        {
            let gb2 = grads.get_mut("b2");
            for k in 0..3 {
                gb2.data[k] += dlogits[k] * scale;
            }
        }
        let mut dhidden = vec![0.0; params.hidden];
        for (i, dh) in dhidden.iter_mut().enumerate() {
            if hidden[i] > 0.0 {
                for k in 0..3 {
                    *dh += dlogits[k] * w2.at(k, i);
                }
            }
        }
        {
            let gw1 = grads.get_mut("w1");
            for i in 0..params.hidden {
                if dhidden[i] != 0.0 {
                    let g = dhidden[i] * scale;
                    for (gv, v) in gw1.row_mut(i).iter_mut().zip(*x) {
                        *gv += g * v;
                    }
                }
            }
        }
        let gb1 = grads.get_mut("b1");
        for i in 0..params.hidden {
            gb1.data[i] += dhidden[i] * scale;
        }
    }
    (grads, total * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = MlpParams::init(6, 10, &mut rng);
        let out = mlp_forward(&p, &[0.5, -1.0, 2.0, 0.0, 0.25, -0.75]);
        assert!(out.iter().all(|&x| x >= 0.0));
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = MlpParams::init(4, 5, &mut rng);
        let rows_data = [
            vec![0.2, -0.3, 0.5, 1.0],
            vec![-0.8, 0.1, 0.0, 0.4],
            vec![0.9, 0.9, -0.2, -0.1],
        ];
        let rows: Vec<&[f64]> = rows_data.iter().map(Vec::as_slice).collect();
        let targets = vec![0, 1, 2];
        let (grads, _) = mlp_batch_grad(&params, &rows, &targets);
        let flat = params.bundle.flatten();
        let gflat = grads.flatten();
        let h = 1e-5;
        let loss_of = |flat: &[f64]| {
            let mut p = params.clone();
            p.bundle.assign_flat(flat);
            rows.iter()
                .zip(&targets)
                .map(|(x, &t)| cross_entropy(&mlp_forward(&p, x), t))
                .sum::<f64>()
                / rows.len() as f64
        };
        for i in 0..flat.len() {
            let mut fp = flat.clone();
            fp[i] += h;
            let lp = loss_of(&fp);
            fp[i] -= 2.0 * h;
            let lm = loss_of(&fp);
            let num = (lp - lm) / (2.0 * h);
            let denom = (num.abs() + gflat[i].abs()).max(1e-8);
            assert!(
                ((num - gflat[i]).abs() / denom) < 1e-3,
                "param {i}: {num} vs {}",
                gflat[i]
            );
        }
    }
}
