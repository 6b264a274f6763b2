//! Attention-based bidirectional LSTM.
//!
//! The embedded window (one d-dim row per slot, left|center|right) feeds
//! four convolution banks with filter widths 2, 3, 5 and 7; max-over-time
//! pooling of each bank is concatenated into an *attention vector*. That
//! vector is appended to every timestep's embedding, and forward and
//! backward LSTMs read the augmented sequence. Their final states are
//! concatenated (64+64 = 128 by default), passed through dropout in
//! training mode, and a softmax layer produces the class probabilities.
//!
//! Word embeddings are pre-trained inputs and are not updated here.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embeddings::{embed_sequence, EmbeddingTable};
use crate::model::{argmax_label, HyperParams, ModelError, TrainingMeta, TrainOptions};
use crate::nn::ops::{cross_entropy, epoch_batches, glorot, sigmoid, softmax, softmax_ce_grad};
use crate::nn::{Bundle, Optimizer};
use crate::window::ContextWindow;

/// Architecture knobs. Defaults: 64 LSTM units per direction, 16 filters
/// per width over widths {2, 3, 5, 7}, dropout 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbLstmConfig {
    pub hidden: usize,
    pub attn_filters: usize,
    pub conv_widths: Vec<usize>,
    pub dropout: f64,
}

impl Default for AbLstmConfig {
    fn default() -> Self {
        AbLstmConfig {
            hidden: 64,
            attn_filters: 16,
            conv_widths: vec![2, 3, 5, 7],
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbLstmParams {
    /// Embedding dimension d of the table this model reads.
    pub input_dim: usize,
    pub hidden: usize,
    pub attn_filters: usize,
    pub conv_widths: Vec<usize>,
    pub dropout: f64,
    pub bundle: Bundle,
}

impl AbLstmParams {
    pub fn init(input_dim: usize, cfg: &AbLstmConfig, rng: &mut impl Rng) -> Self {
        let f = cfg.attn_filters;
        let h = cfg.hidden;
        let attn_dim = cfg.conv_widths.len() * f;
        let n_in = input_dim + attn_dim;
        let mut bundle = Bundle::new();
        for &w in &cfg.conv_widths {
            bundle.add_matrix(
                &format!("conv_w_{w}"),
                f,
                w * input_dim,
                glorot(rng, w * input_dim, f),
            );
            bundle.add_vector(&format!("conv_b_{w}"), f, || 0.0);
        }
        for dir in ["fwd", "bwd"] {
            bundle.add_matrix(&format!("{dir}_wx"), 4 * h, n_in, glorot(rng, n_in, h));
            bundle.add_matrix(&format!("{dir}_wh"), 4 * h, h, glorot(rng, h, h));
            // forget-gate bias starts at 1
            let mut row = 0usize;
            bundle.add_vector(&format!("{dir}_b"), 4 * h, || {
                let v = if (h..2 * h).contains(&row) { 1.0 } else { 0.0 };
                row += 1;
                v
            });
        }
        bundle.add_matrix("out_w", 3, 2 * h, glorot(rng, 2 * h, 3));
        bundle.add_vector("out_b", 3, || 0.0);
        AbLstmParams {
            input_dim,
            hidden: h,
            attn_filters: f,
            conv_widths: cfg.conv_widths.clone(),
            dropout: cfg.dropout,
            bundle,
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.conv_widths.len() * self.attn_filters
    }

    fn max_width(&self) -> usize {
        self.conv_widths.iter().copied().max().unwrap_or(1)
    }
}

struct AttnTrace {
    /// zero-padded copy of the input when it was shorter than the widest filter
    padded: Vec<Vec<f64>>,
    /// winning position per (width, filter)
    argmax: Vec<Vec<usize>>,
    vector: Vec<f64>,
}

fn attention_trace(params: &AbLstmParams, seq: &[Vec<f64>]) -> Result<AttnTrace, ModelError> {
    if seq.is_empty() {
        return Err(ModelError::SequenceTooShort);
    }
    let d = params.input_dim;
    let mut padded: Vec<Vec<f64>> = seq.to_vec();
    while padded.len() < params.max_width() {
        padded.push(vec![0.0; d]);
    }
    let f = params.attn_filters;
    let mut vector = Vec::with_capacity(params.attn_dim());
    let mut argmax = Vec::with_capacity(params.conv_widths.len());
    for &w in &params.conv_widths {
        let conv_w = params.bundle.get(&format!("conv_w_{w}"));
        let conv_b = params.bundle.get(&format!("conv_b_{w}"));
        let positions = padded.len() - w + 1;
        let mut bank_argmax = Vec::with_capacity(f);
        for q in 0..f {
            let wrow = conv_w.row(q);
            let mut best = f64::NEG_INFINITY;
            let mut best_p = 0;
            for p in 0..positions {
                let mut act = conv_b.data[q];
                for j in 0..w {
                    let x = &padded[p + j];
                    let wj = &wrow[j * d..(j + 1) * d];
                    for k in 0..d {
                        act += wj[k] * x[k];
                    }
                }
                if act > best {
                    best = act;
                    best_p = p;
                }
            }
            vector.push(best);
            bank_argmax.push(best_p);
        }
        argmax.push(bank_argmax);
    }
    Ok(AttnTrace {
        padded,
        argmax,
        vector,
    })
}

/// Concatenated max-pooled outputs of the four convolution banks. Sequences
/// shorter than the widest filter are zero-padded; only an empty sequence
/// is an error.
pub fn compute_attention_vector(
    params: &AbLstmParams,
    seq: &[Vec<f64>],
) -> Result<Vec<f64>, ModelError> {
    Ok(attention_trace(params, seq)?.vector)
}

/// Per-timestep cache for BPTT.
struct StepTrace {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct DirTrace {
    steps: Vec<StepTrace>,
    final_h: Vec<f64>,
}

fn run_lstm(params: &AbLstmParams, dir: &str, inputs: &[Vec<f64>]) -> DirTrace {
    let h_n = params.hidden;
    let wx = params.bundle.get(&format!("{dir}_wx"));
    let wh = params.bundle.get(&format!("{dir}_wh"));
    let b = params.bundle.get(&format!("{dir}_b"));
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut gates = vec![0.0; 4 * h_n];
        for (r, gate) in gates.iter_mut().enumerate() {
            let mut z = b.data[r];
            let wxr = wx.row(r);
            for (w, v) in wxr.iter().zip(x) {
                z += w * v;
            }
            let whr = wh.row(r);
            for (w, v) in whr.iter().zip(&h) {
                z += w * v;
            }
            *gate = z;
        }
        let mut step = StepTrace {
            x: x.clone(),
            h_prev: h.clone(),
            c_prev: c.clone(),
            i: vec![0.0; h_n],
            f: vec![0.0; h_n],
            g: vec![0.0; h_n],
            o: vec![0.0; h_n],
            c: vec![0.0; h_n],
            tanh_c: vec![0.0; h_n],
        };
        for u in 0..h_n {
            step.i[u] = sigmoid(gates[u]);
            step.f[u] = sigmoid(gates[h_n + u]);
            step.g[u] = gates[2 * h_n + u].tanh();
            step.o[u] = sigmoid(gates[3 * h_n + u]);
            step.c[u] = step.f[u] * step.c_prev[u] + step.i[u] * step.g[u];
            step.tanh_c[u] = step.c[u].tanh();
            h[u] = step.o[u] * step.tanh_c[u];
            c[u] = step.c[u];
        }
        steps.push(step);
    }
    DirTrace { steps, final_h: h }
}

struct ForwardTrace {
    attn: AttnTrace,
    fwd: DirTrace,
    bwd: DirTrace,
    /// 2H concat after dropout (the vector the output layer saw)
    dropped: Vec<f64>,
    /// inverted-dropout mask factors (1/keep or 0); all ones at inference
    mask: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_trace(
    params: &AbLstmParams,
    seq: &[Vec<f64>],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardTrace, ModelError> {
    let attn = attention_trace(params, seq)?;
    let augmented: Vec<Vec<f64>> = seq
        .iter()
        .map(|x| {
            let mut v = x.clone();
            v.extend_from_slice(&attn.vector);
            v
        })
        .collect();
    let reversed: Vec<Vec<f64>> = augmented.iter().rev().cloned().collect();
    let fwd = run_lstm(params, "fwd", &augmented);
    let bwd = run_lstm(params, "bwd", &reversed);

    let mut concat = Vec::with_capacity(2 * params.hidden);
    concat.extend_from_slice(&fwd.final_h);
    concat.extend_from_slice(&bwd.final_h);

    let mask: Vec<f64> = match dropout_rng {
        Some(rng) => {
            let keep = 1.0 - params.dropout;
            concat
                .iter()
                .map(|_| {
                    if rng.random_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        None => vec![1.0; concat.len()],
    };
    let dropped: Vec<f64> = concat.iter().zip(&mask).map(|(v, m)| v * m).collect();

    let out_w = params.bundle.get("out_w");
    let out_b = params.bundle.get("out_b");
    let mut logits = [0.0; 3];
    for (k, logit) in logits.iter_mut().enumerate() {
        *logit = out_b.data[k]
            + out_w.row(k).iter().zip(&dropped).map(|(w, v)| w * v).sum::<f64>();
    }
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        attn,
        fwd,
        bwd,
        dropped,
        mask,
        probs,
    })
}

/// Deterministic inference pass (dropout disabled).
pub fn forward_inference(params: &AbLstmParams, seq: &[Vec<f64>]) -> Result<[f64; 3], ModelError> {
    let t = forward_trace(params, seq, None)?;
    Ok([t.probs[0], t.probs[1], t.probs[2]])
}

/// Predict from a window through the model's embedding table.
pub fn predict_proba(
    params: &AbLstmParams,
    window: &ContextWindow,
    table: &EmbeddingTable,
) -> Result<[f64; 3], ModelError> {
    if table.dim() != params.input_dim {
        return Err(ModelError::TableDimMismatch {
            name: table.name().to_string(),
            expected: params.input_dim,
            found: table.dim(),
        });
    }
    forward_inference(params, &embed_sequence(window, table))
}

fn backward_into(
    params: &AbLstmParams,
    trace: &ForwardTrace,
    target: usize,
    grads: &mut Bundle,
    scale: f64,
) {
    let h_n = params.hidden;
    let d = params.input_dim;
    let dlogits = softmax_ce_grad(&trace.probs, target);

    // output layer
    {
        let gw = grads.get_mut("out_w");
        for k in 0..3 {
            let g = dlogits[k] * scale;
            for (gv, v) in gw.row_mut(k).iter_mut().zip(&trace.dropped) {
                *gv += g * v;
            }
        }
        let gb = grads.get_mut("out_b");
        for k in 0..3 {
            gb.data[k] += dlogits[k] * scale;
        }
    }
    let out_w = params.bundle.get("out_w");
    let mut dconcat = vec![0.0; 2 * h_n];
    for (j, dc) in dconcat.iter_mut().enumerate() {
        for k in 0..3 {
            *dc += dlogits[k] * out_w.at(k, j);
        }
        *dc *= trace.mask[j]; // back through dropout
    }

    let mut dattn = vec![0.0; params.attn_dim()];
    backward_lstm(
        params,
        "fwd",
        &trace.fwd,
        &dconcat[..h_n],
        grads,
        scale,
        &mut dattn,
    );
    backward_lstm(
        params,
        "bwd",
        &trace.bwd,
        &dconcat[h_n..],
        grads,
        scale,
        &mut dattn,
    );

    // attention vector -> conv banks (through the winning positions)
    let f_n = params.attn_filters;
    for (wi, &w) in params.conv_widths.iter().enumerate() {
        for q in 0..f_n {
            let da = dattn[wi * f_n + q];
            if da == 0.0 {
                continue;
            }
            let p = trace.attn.argmax[wi][q];
            grads.get_mut(&format!("conv_b_{w}")).data[q] += da * scale;
            let gw = grads.get_mut(&format!("conv_w_{w}"));
            let grow = gw.row_mut(q);
            for j in 0..w {
                let x = &trace.attn.padded[p + j];
                for k in 0..d {
                    grow[j * d + k] += da * scale * x[k];
                }
            }
        }
    }
}

/// BPTT through one direction. Accumulates parameter gradients and the
/// gradient w.r.t. the attention slice of every timestep input into `dattn`.
#[allow(clippy::too_many_arguments)]
fn backward_lstm(
    params: &AbLstmParams,
    dir: &str,
    trace: &DirTrace,
    dh_final: &[f64],
    grads: &mut Bundle,
    scale: f64,
    dattn: &mut [f64],
) {
    let h_n = params.hidden;
    let d = params.input_dim;
    let wx = params.bundle.get(&format!("{dir}_wx"));
    let wh = params.bundle.get(&format!("{dir}_wh"));

    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; h_n];
    let mut da = vec![0.0; 4 * h_n];

    for step in trace.steps.iter().rev() {
        for u in 0..h_n {
            let do_ = dh[u] * step.tanh_c[u];
            let dtanh = dh[u] * step.o[u] * (1.0 - step.tanh_c[u] * step.tanh_c[u]);
            let dcu = dc[u] + dtanh;
            let di = dcu * step.g[u];
            let dg = dcu * step.i[u];
            let df = dcu * step.c_prev[u];
            da[u] = di * step.i[u] * (1.0 - step.i[u]);
            da[h_n + u] = df * step.f[u] * (1.0 - step.f[u]);
            da[2 * h_n + u] = dg * (1.0 - step.g[u] * step.g[u]);
            da[3 * h_n + u] = do_ * step.o[u] * (1.0 - step.o[u]);
            dc[u] = dcu * step.f[u];
        }

        {
            let gwx = grads.get_mut(&format!("{dir}_wx"));
            for r in 0..4 * h_n {
                if da[r] != 0.0 {
                    let g = da[r] * scale;
                    for (gv, v) in gwx.row_mut(r).iter_mut().zip(&step.x) {
                        *gv += g * v;
                    }
                }
            }
        }
        {
            let gwh = grads.get_mut(&format!("{dir}_wh"));
            for r in 0..4 * h_n {
                if da[r] != 0.0 {
                    let g = da[r] * scale;
                    for (gv, v) in gwh.row_mut(r).iter_mut().zip(&step.h_prev) {
                        *gv += g * v;
                    }
                }
            }
        }
        {
            let gb = grads.get_mut(&format!("{dir}_b"));
            for r in 0..4 * h_n {
                gb.data[r] += da[r] * scale;
            }
        }

        // input gradient: embeddings are fixed, the attention slice flows
        // back (unscaled here; the conv-grad writer applies the batch scale)
        for (k, dv) in dattn.iter_mut().enumerate() {
            let col = d + k;
            let mut acc = 0.0;
            for r in 0..4 * h_n {
                acc += da[r] * wx.at(r, col);
            }
            *dv += acc;
        }
        // recurrent gradient for the previous step
        let mut dh_prev = vec![0.0; h_n];
        for (u, dv) in dh_prev.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..4 * h_n {
                acc += da[r] * wh.at(r, u);
            }
            *dv = acc;
        }
        dh = dh_prev;
    }
}

/// Mean cross-entropy over embedded sequences, dropout off.
pub fn batch_loss(params: &AbLstmParams, data: &[(Vec<Vec<f64>>, Label)]) -> f64 {
    let mut total = 0.0;
    for (seq, y) in data {
        let t = forward_trace(params, seq, None).expect("non-empty sequence");
        total += cross_entropy(&t.probs, y.index());
    }
    total / data.len() as f64
}

/// Gradient of [`batch_loss`] (dropout off), plus the loss.
pub fn batch_grad(params: &AbLstmParams, data: &[(Vec<Vec<f64>>, Label)]) -> (Bundle, f64) {
    let mut grads = params.bundle.zeros_like();
    let scale = 1.0 / data.len() as f64;
    let mut total = 0.0;
    for (seq, y) in data {
        let t = forward_trace(params, seq, None).expect("non-empty sequence");
        total += cross_entropy(&t.probs, y.index());
        backward_into(params, &t, y.index(), &mut grads, scale);
    }
    (grads, total * scale)
}

fn batch_grad_dropout(
    params: &AbLstmParams,
    data: &[(Vec<Vec<f64>>, Label)],
    rng: &mut ChaCha8Rng,
) -> (Bundle, f64) {
    let mut grads = params.bundle.zeros_like();
    let scale = 1.0 / data.len() as f64;
    let mut total = 0.0;
    for (seq, y) in data {
        let t = forward_trace(params, seq, Some(rng)).expect("non-empty sequence");
        total += cross_entropy(&t.probs, y.index());
        backward_into(params, &t, y.index(), &mut grads, scale);
    }
    (grads, total * scale)
}

/// Train with backpropagation through time, seeded dropout masks included.
pub fn train_ab_lstm(
    hp: &HyperParams,
    data: &[(ContextWindow, Label)],
    table: &EmbeddingTable,
    opts: &TrainOptions,
) -> Result<(AbLstmParams, TrainingMeta), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let shape = (hp.left, hp.center, hp.right);
    for (w, _) in data {
        if w.shape() != shape {
            return Err(ModelError::WindowSizeMismatch {
                expected: shape,
                found: w.shape(),
            });
        }
    }
    let sequences: Vec<(Vec<Vec<f64>>, Label)> = data
        .iter()
        .map(|(w, y)| (embed_sequence(w, table), *y))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut params = AbLstmParams::init(table.dim(), &opts.ab_lstm, &mut rng);
    let mut optimizer = Optimizer::new(opts.optimizer, params.bundle.param_count());

    let mut final_loss = f64::NAN;
    for _epoch in 0..opts.epochs {
        let mut epoch_loss = 0.0;
        let mut seen = 0;
        for batch in epoch_batches(sequences.len(), opts.batch_size, &mut rng) {
            let items: Vec<(Vec<Vec<f64>>, Label)> =
                batch.iter().map(|&i| sequences[i].clone()).collect();
            let (grads, loss) = batch_grad_dropout(&params, &items, &mut rng);
            optimizer.step(&mut params.bundle, &grads);
            epoch_loss += loss * items.len() as f64;
            seen += items.len();
        }
        final_loss = epoch_loss / seen as f64;
    }

    let correct = sequences
        .iter()
        .filter(|(seq, y)| {
            forward_inference(&params, seq)
                .map(|p| argmax_label(&p) == *y)
                .unwrap_or(false)
        })
        .count();
    let meta = TrainingMeta {
        epochs_run: opts.epochs,
        final_train_loss: final_loss,
        train_accuracy: correct as f64 / sequences.len() as f64,
        dev_score: None,
    };
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> AbLstmConfig {
        AbLstmConfig {
            hidden: 8,
            attn_filters: 2,
            conv_widths: vec![2, 3, 5, 7],
            dropout: 0.5,
        }
    }

    fn random_seq(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..t)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn attention_length_is_four_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = AbLstmParams::init(3, &tiny_cfg(), &mut rng);
        for t in [1, 7, 8, 20] {
            let seq = random_seq(t, 3, &mut rng);
            let a = compute_attention_vector(&params, &seq).unwrap();
            assert_eq!(a.len(), 8);
        }
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = AbLstmParams::init(3, &tiny_cfg(), &mut rng);
        assert!(matches!(
            compute_attention_vector(&params, &[]),
            Err(ModelError::SequenceTooShort)
        ));
    }

    #[test]
    fn zero_input_and_zero_bias_give_zero_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = AbLstmParams::init(4, &tiny_cfg(), &mut rng);
        let seq = vec![vec![0.0; 4]; 9];
        let a = compute_attention_vector(&params, &seq).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn attention_matches_nested_loop_oracle() {
        for trial in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let params = AbLstmParams::init(3, &tiny_cfg(), &mut rng);
            let seq = random_seq(8, 3, &mut rng);
            let got = compute_attention_vector(&params, &seq).unwrap();
            // oracle: direct nested loops, no caching or argmax bookkeeping
            let mut expected = Vec::new();
            for &w in &params.conv_widths {
                let cw = params.bundle.get(&format!("conv_w_{w}"));
                let cb = params.bundle.get(&format!("conv_b_{w}"));
                for q in 0..params.attn_filters {
                    let mut best = f64::NEG_INFINITY;
                    for p in 0..=(seq.len() - w) {
                        let mut act = cb.data[q];
                        for j in 0..w {
                            for k in 0..3 {
                                act += cw.at(q, j * 3 + k) * seq[p + j][k];
                            }
                        }
                        best = best.max(act);
                    }
                    expected.push(best);
                }
            }
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-6, "trial {trial}");
            }
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = AbLstmParams::init(4, &tiny_cfg(), &mut rng);
        let seq = random_seq(9, 4, &mut rng);
        let a = forward_inference(&params, &seq).unwrap();
        let b = forward_inference(&params, &seq).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_softmax_weights_give_uniform_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = AbLstmParams::init(4, &tiny_cfg(), &mut rng);
        params.bundle.get_mut("out_w").data.iter_mut().for_each(|x| *x = 0.0);
        params.bundle.get_mut("out_b").data.iter_mut().for_each(|x| *x = 0.0);
        let seq = random_seq(8, 4, &mut rng);
        let p = forward_inference(&params, &seq).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_simplex_for_any_parameters() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = AbLstmParams::init(3, &tiny_cfg(), &mut rng);
            params.bundle.get_mut("out_w").data.iter_mut().for_each(|x| *x *= 50.0);
            let seq = random_seq(7 + seed as usize, 3, &mut rng);
            let p = forward_inference(&params, &seq).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    /// Reversing the sequence, swapping the forward/backward parameter
    /// blocks, swapping the softmax column halves, and time-reversing every
    /// conv filter must leave the output unchanged.
    #[test]
    fn direction_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 3;
        let params = AbLstmParams::init(d, &tiny_cfg(), &mut rng);
        let seq = random_seq(8, d, &mut rng);
        let base = forward_inference(&params, &seq).unwrap();

        let mut swapped = params.clone();
        for suffix in ["wx", "wh", "b"] {
            let f = params.bundle.get(&format!("fwd_{suffix}")).data.clone();
            let b = params.bundle.get(&format!("bwd_{suffix}")).data.clone();
            swapped.bundle.get_mut(&format!("fwd_{suffix}")).data = b;
            swapped.bundle.get_mut(&format!("bwd_{suffix}")).data = f;
        }
        {
            let h = params.hidden;
            let out = params.bundle.get("out_w");
            let mut data = out.data.clone();
            for k in 0..3 {
                for u in 0..h {
                    data[k * 2 * h + u] = out.at(k, h + u);
                    data[k * 2 * h + h + u] = out.at(k, u);
                }
            }
            swapped.bundle.get_mut("out_w").data = data;
        }
        for &w in &params.conv_widths.clone() {
            let src = params.bundle.get(&format!("conv_w_{w}")).clone();
            let dst = swapped.bundle.get_mut(&format!("conv_w_{w}"));
            for q in 0..params.attn_filters {
                for j in 0..w {
                    for k in 0..d {
                        dst.row_mut(q)[j * d + k] = src.at(q, (w - 1 - j) * d + k);
                    }
                }
            }
        }

        let reversed: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let got = forward_inference(&swapped, &reversed).unwrap();
        for (a, b) in base.iter().zip(&got) {
            assert!((a - b).abs() < 1e-9, "{base:?} vs {got:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = AbLstmConfig {
            hidden: 8,
            attn_filters: 2,
            conv_widths: vec![2, 3],
            dropout: 0.5,
        };
        let d = 4;
        let params = AbLstmParams::init(d, &cfg, &mut rng);
        let data = vec![
            (random_seq(6, d, &mut rng), Label::Material),
            (random_seq(6, d, &mut rng), Label::Task),
        ];
        let (grads, _) = batch_grad(&params, &data);
        let flat = params.bundle.flatten();
        let gflat = grads.flatten();
        let h = 1e-4;
        let mut bad = 0usize;
        for i in 0..flat.len() {
            let mut p = params.clone();
            let mut fp = flat.clone();
            fp[i] += h;
            p.bundle.assign_flat(&fp);
            let lp = batch_loss(&p, &data);
            fp[i] -= 2.0 * h;
            p.bundle.assign_flat(&fp);
            let lm = batch_loss(&p, &data);
            let num = (lp - lm) / (2.0 * h);
            let denom = (num.abs() + gflat[i].abs()).max(1e-8);
            let rel = (num - gflat[i]).abs() / denom;
            if rel > 1e-3 {
                bad += 1;
            }
            assert!(rel <= 1e-2, "param {i}: numeric {num} vs analytic {}", gflat[i]);
        }
        assert!(
            bad as f64 <= 0.05 * flat.len() as f64,
            "{bad} of {} parameters exceeded 1e-3",
            flat.len()
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        use crate::model::ModelFamily;
        use crate::window::Slot;
        let table = EmbeddingTable::from_entries(
            "toy",
            3,
            vec![
                ("iron", vec![1.0, 0.0, 0.0]),
                ("anneal", vec![0.0, 1.0, 0.0]),
                ("parsing", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let mk = |w: &str| {
            ContextWindow::new(
                vec![Slot::word(w)],
                vec![Slot::word(w), Slot::Pad, Slot::Pad, Slot::Pad],
                vec![Slot::Pad],
            )
        };
        let data = vec![
            (mk("iron"), Label::Material),
            (mk("anneal"), Label::Process),
            (mk("parsing"), Label::Task),
        ];
        let hp = HyperParams {
            family: ModelFamily::AbLstm,
            left: 1,
            right: 1,
            center: 4,
            filters: 250,
            filter_width: 3,
            char_budget: 100,
            embedding: "toy".into(),
            seed: 33,
        };
        let opts = TrainOptions {
            epochs: 3,
            ab_lstm: tiny_cfg(),
            ..TrainOptions::default()
        };
        let (a, _) = train_ab_lstm(&hp, &data, &table, &opts).unwrap();
        let (b, _) = train_ab_lstm(&hp, &data, &table, &opts).unwrap();
        assert_eq!(a, b);
    }
}
