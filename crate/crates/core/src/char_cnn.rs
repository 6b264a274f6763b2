//! Character-level CNN.
//!
//! Each of the three contexts (left, center, right) is encoded
//! independently: characters map to learned 32-d embeddings, `m` filters of
//! width `s` slide over the character axis, max-over-time pooling reduces
//! each filter to one scalar, and a dense tanh layer produces a 100-d
//! context representation. The three representations are concatenated to
//! 300-d and a softmax layer predicts the class.
//!
//! The three contexts use the same architecture but separate weights.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::model::{argmax_label, HyperParams, ModelError, TrainingMeta, TrainOptions};
use crate::nn::ops::{cross_entropy, dtanh_from_y, epoch_batches, glorot, softmax, softmax_ce_grad};
use crate::nn::{Bundle, Optimizer};
use crate::window::{ContextWindow, Slot};

/// Learned character-embedding width (fixed by the architecture).
pub const CHAR_EMBED_DIM: usize = 32;
/// Per-context representation width (fixed by the architecture).
pub const CONTEXT_DIM: usize = 100;

const CONTEXTS: [&str; 3] = ["left", "center", "right"];

/// Character inventory: PAD, UNK, then printable ASCII. Everything outside
/// printable ASCII maps to UNK.
pub struct CharVocab;

impl CharVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    pub const fn size() -> usize {
        2 + 95 // PAD + UNK + printable ASCII 0x20..=0x7E
    }

    pub fn index_of(c: char) -> usize {
        let code = c as u32;
        if (0x20..=0x7E).contains(&code) {
            (code as usize - 0x20) + 2
        } else {
            Self::UNK
        }
    }
}

/// Join the real tokens of one context with single spaces, map characters to
/// vocabulary indices and truncate or PAD-fill to exactly `budget` slots.
pub fn encode_chars(context: &[Slot], budget: usize) -> Vec<usize> {
    assert!(budget >= 1, "character budget must be at least 1");
    let text = context
        .iter()
        .filter_map(Slot::as_word)
        .collect::<Vec<_>>()
        .join(" ");
    let mut indices: Vec<usize> = text
        .chars()
        .take(budget)
        .map(CharVocab::index_of)
        .collect();
    indices.resize(budget, CharVocab::PAD);
    indices
}

/// All weights of one char-CNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharCnnParams {
    pub filters: usize,
    pub filter_width: usize,
    pub char_budget: usize,
    pub bundle: Bundle,
}

impl CharCnnParams {
    /// Fresh parameters with seeded Glorot initialization.
    pub fn init(filters: usize, filter_width: usize, char_budget: usize, rng: &mut impl Rng) -> Self {
        assert!(filters >= 1 && filter_width >= 1);
        assert!(
            char_budget >= filter_width,
            "character budget {char_budget} shorter than filter width {filter_width}"
        );
        let v = CharVocab::size();
        let mut bundle = Bundle::new();
        bundle.add_matrix("char_embed", v, CHAR_EMBED_DIM, || rng.random_range(-0.08..0.08));
        for ctx in CONTEXTS {
            bundle.add_matrix(
                &format!("conv_w_{ctx}"),
                filters,
                filter_width * CHAR_EMBED_DIM,
                glorot(rng, filter_width * CHAR_EMBED_DIM, filters),
            );
            bundle.add_vector(&format!("conv_b_{ctx}"), filters, || 0.0);
            bundle.add_matrix(
                &format!("dense_w_{ctx}"),
                CONTEXT_DIM,
                filters,
                glorot(rng, filters, CONTEXT_DIM),
            );
            bundle.add_vector(&format!("dense_b_{ctx}"), CONTEXT_DIM, || 0.0);
        }
        bundle.add_matrix("out_w", 3, 3 * CONTEXT_DIM, glorot(rng, 3 * CONTEXT_DIM, 3));
        bundle.add_vector("out_b", 3, || 0.0);
        CharCnnParams {
            filters,
            filter_width,
            char_budget,
            bundle,
        }
    }

    /// Closed-form parameter count implied by the shapes.
    pub fn expected_param_count(filters: usize, filter_width: usize) -> usize {
        let v = CharVocab::size();
        v * CHAR_EMBED_DIM
            + 3 * (filters * filter_width * CHAR_EMBED_DIM  // conv weights
                + filters                                    // conv biases
                + CONTEXT_DIM * filters                      // dense weights
                + CONTEXT_DIM)                               // dense biases
            + 3 * (3 * CONTEXT_DIM)                          // softmax weights
            + 3                                              // softmax biases
    }
}

/// Per-context forward cache for backprop.
struct ContextTrace {
    indices: Vec<usize>,
    /// winning position per filter; `None` when every window was pure PAD.
    argmax: Vec<Option<usize>>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
}

struct Trace {
    contexts: [ContextTrace; 3],
    concat: Vec<f64>,
    probs: Vec<f64>,
}

fn encode_window(params: &CharCnnParams, window: &ContextWindow) -> [Vec<usize>; 3] {
    [
        encode_chars(&window.left, params.char_budget),
        encode_chars(&window.center, params.char_budget),
        encode_chars(&window.right, params.char_budget),
    ]
}

fn forward_context(params: &CharCnnParams, ctx: &str, indices: Vec<usize>) -> ContextTrace {
    let m = params.filters;
    let s = params.filter_width;
    let embed = params.bundle.get("char_embed");
    let conv_w = params.bundle.get(&format!("conv_w_{ctx}"));
    let conv_b = params.bundle.get(&format!("conv_b_{ctx}"));
    let dense_w = params.bundle.get(&format!("dense_w_{ctx}"));
    let dense_b = params.bundle.get(&format!("dense_b_{ctx}"));

    let real_len = indices
        .iter()
        .position(|&i| i == CharVocab::PAD)
        .unwrap_or(indices.len());
    let positions = indices.len() - s + 1;

    // Max-over-time with pure-PAD windows masked out, so padding can never
    // win the max. A context with no real characters pools to zero.
    // A window position p covers at least one real character iff p < real_len.
    let unmasked = positions.min(real_len);
    let mut pooled = vec![0.0; m];
    let mut argmax = vec![None; m];
    for f in 0..m {
        let w = conv_w.row(f);
        let mut best: Option<(usize, f64)> = None;
        for p in 0..unmasked {
            let mut act = conv_b.data[f];
            for j in 0..s {
                let row = embed.row(indices[p + j]);
                let wj = &w[j * CHAR_EMBED_DIM..(j + 1) * CHAR_EMBED_DIM];
                for k in 0..CHAR_EMBED_DIM {
                    act += wj[k] * row[k];
                }
            }
            match best {
                Some((_, b)) if act <= b => {}
                _ => best = Some((p, act)),
            }
        }
        if let Some((p, b)) = best {
            pooled[f] = b;
            argmax[f] = Some(p);
        }
    }

    let mut hidden = vec![0.0; CONTEXT_DIM];
    for (i, h) in hidden.iter_mut().enumerate() {
        let mut z = dense_b.data[i];
        let wrow = dense_w.row(i);
        for f in 0..m {
            z += wrow[f] * pooled[f];
        }
        *h = z.tanh();
    }

    ContextTrace {
        indices,
        argmax,
        pooled,
        hidden,
    }
}

fn forward_trace(params: &CharCnnParams, encoded: [Vec<usize>; 3]) -> Trace {
    let [l, c, r] = encoded;
    let contexts = [
        forward_context(params, "left", l),
        forward_context(params, "center", c),
        forward_context(params, "right", r),
    ];
    let mut concat = Vec::with_capacity(3 * CONTEXT_DIM);
    for t in &contexts {
        concat.extend_from_slice(&t.hidden);
    }
    let out_w = params.bundle.get("out_w");
    let out_b = params.bundle.get("out_b");
    let mut logits = [0.0; 3];
    for (k, logit) in logits.iter_mut().enumerate() {
        let row = out_w.row(k);
        *logit = out_b.data[k] + row.iter().zip(&concat).map(|(w, x)| w * x).sum::<f64>();
    }
    let probs = softmax(&logits);
    Trace {
        contexts,
        concat,
        probs,
    }
}

/// Class probabilities for one window.
pub fn forward(params: &CharCnnParams, window: &ContextWindow) -> [f64; 3] {
    let trace = forward_trace(params, encode_window(params, window));
    [trace.probs[0], trace.probs[1], trace.probs[2]]
}

/// The 300-d concatenated tanh representation, exposed for inspection.
pub fn context_representation(params: &CharCnnParams, window: &ContextWindow) -> Vec<f64> {
    forward_trace(params, encode_window(params, window)).concat
}

fn backward_into(
    params: &CharCnnParams,
    trace: &Trace,
    target: usize,
    grads: &mut Bundle,
    scale: f64,
) {
    let dlogits = softmax_ce_grad(&trace.probs, target);

    // softmax layer
    {
        let out_w = params.bundle.get("out_w");
        let gw = grads.get_mut("out_w");
        for k in 0..3 {
            let g = dlogits[k] * scale;
            for (gv, x) in gw.row_mut(k).iter_mut().zip(&trace.concat) {
                *gv += g * x;
            }
        }
        let gb = grads.get_mut("out_b");
        for k in 0..3 {
            gb.data[k] += dlogits[k] * scale;
        }
        let mut dconcat = vec![0.0; 3 * CONTEXT_DIM];
        for k in 0..3 {
            let row = out_w.row(k);
            for (dc, w) in dconcat.iter_mut().zip(row) {
                *dc += dlogits[k] * w;
            }
        }
        for (ci, ctx) in CONTEXTS.iter().enumerate() {
            let t = &trace.contexts[ci];
            let dh = &dconcat[ci * CONTEXT_DIM..(ci + 1) * CONTEXT_DIM];
            backward_context(params, ctx, t, dh, grads, scale);
        }
    }
}

fn backward_context(
    params: &CharCnnParams,
    ctx: &str,
    t: &ContextTrace,
    dhidden: &[f64],
    grads: &mut Bundle,
    scale: f64,
) {
    let m = params.filters;
    let s = params.filter_width;
    let dense_w = params.bundle.get(&format!("dense_w_{ctx}"));
    let conv_w = params.bundle.get(&format!("conv_w_{ctx}"));
    let embed = params.bundle.get("char_embed");

    // dense tanh layer
    let mut dpooled = vec![0.0; m];
    {
        let mut dpre = vec![0.0; CONTEXT_DIM];
        for i in 0..CONTEXT_DIM {
            dpre[i] = dhidden[i] * dtanh_from_y(t.hidden[i]);
        }
        let gw = grads.get_mut(&format!("dense_w_{ctx}"));
        for i in 0..CONTEXT_DIM {
            let g = dpre[i] * scale;
            for (gv, p) in gw.row_mut(i).iter_mut().zip(&t.pooled) {
                *gv += g * p;
            }
        }
        let gb = grads.get_mut(&format!("dense_b_{ctx}"));
        for i in 0..CONTEXT_DIM {
            gb.data[i] += dpre[i] * scale;
        }
        for f in 0..m {
            let mut acc = 0.0;
            for i in 0..CONTEXT_DIM {
                acc += dpre[i] * dense_w.at(i, f);
            }
            dpooled[f] = acc;
        }
    }

    // conv + max pooling: gradient flows only through the winning position
    let gcw_name = format!("conv_w_{ctx}");
    let gcb_name = format!("conv_b_{ctx}");
    for f in 0..m {
        let Some(p) = t.argmax[f] else { continue };
        let d = dpooled[f];
        if d == 0.0 {
            continue;
        }
        grads.get_mut(&gcb_name).data[f] += d * scale;
        for j in 0..s {
            let idx = t.indices[p + j];
            let erow = embed.row(idx);
            {
                let gw = grads.get_mut(&gcw_name);
                let grow = &mut gw.row_mut(f)[j * CHAR_EMBED_DIM..(j + 1) * CHAR_EMBED_DIM];
                for k in 0..CHAR_EMBED_DIM {
                    grow[k] += d * scale * erow[k];
                }
            }
            let wrow = conv_w.row(f);
            let wj = &wrow[j * CHAR_EMBED_DIM..(j + 1) * CHAR_EMBED_DIM];
            let ge = grads.get_mut("char_embed");
            let gerow = ge.row_mut(idx);
            for k in 0..CHAR_EMBED_DIM {
                gerow[k] += d * scale * wj[k];
            }
        }
    }
}

/// Mean cross-entropy over a labeled batch.
pub fn batch_loss(params: &CharCnnParams, data: &[(ContextWindow, Label)]) -> f64 {
    let mut total = 0.0;
    for (w, y) in data {
        let trace = forward_trace(params, encode_window(params, w));
        total += cross_entropy(&trace.probs, y.index());
    }
    total / data.len() as f64
}

/// Gradient of [`batch_loss`] w.r.t. every parameter, plus the loss itself.
pub fn batch_grad(params: &CharCnnParams, data: &[(ContextWindow, Label)]) -> (Bundle, f64) {
    let mut grads = params.bundle.zeros_like();
    let mut total = 0.0;
    let scale = 1.0 / data.len() as f64;
    for (w, y) in data {
        let trace = forward_trace(params, encode_window(params, w));
        total += cross_entropy(&trace.probs, y.index());
        backward_into(params, &trace, y.index(), &mut grads, scale);
    }
    (grads, total * scale)
}

/// Train a char-CNN with the configured regimen. Deterministic in `hp.seed`.
pub fn train_char_cnn(
    hp: &HyperParams,
    data: &[(ContextWindow, Label)],
    opts: &TrainOptions,
) -> Result<(CharCnnParams, TrainingMeta), ModelError> {
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

    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut params = CharCnnParams::init(hp.filters, hp.filter_width, hp.char_budget, &mut rng);
    let mut optimizer = Optimizer::new(opts.optimizer, params.bundle.param_count());

    let mut final_loss = f64::NAN;
    for _epoch in 0..opts.epochs {
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in epoch_batches(data.len(), opts.batch_size, &mut rng) {
            let items: Vec<(ContextWindow, Label)> =
                batch.iter().map(|&i| data[i].clone()).collect();
            let (grads, loss) = batch_grad(&params, &items);
            optimizer.step(&mut params.bundle, &grads);
            epoch_loss += loss * items.len() as f64;
            seen += items.len();
        }
        final_loss = epoch_loss / seen as f64;
    }

    let correct = data
        .iter()
        .filter(|(w, y)| argmax_label(&forward(&params, w)) == *y)
        .count();
    let meta = TrainingMeta {
        epochs_run: opts.epochs,
        final_train_loss: final_loss,
        train_accuracy: correct as f64 / data.len() as f64,
        dev_score: None,
    };
    Ok((params, meta))
}
