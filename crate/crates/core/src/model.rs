//! Common contract for the three model families: hyperparameter sampling,
//! training dispatch, prediction, and model persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ab_lstm::{self, AbLstmConfig, AbLstmParams};
use crate::char_cnn::{self, CharCnnParams};
use crate::corpus::{InstanceKey, Label};
use crate::embeddings::TableSet;
use crate::nn::OptimizerKind;
use crate::stacker::{self, StackerConfig, StackerParams};
use crate::window::ContextWindow;

/// Container format version for persisted models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    CharCnn,
    Stacker,
    AbLstm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::CharCnn, ModelFamily::Stacker, ModelFamily::AbLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::CharCnn => "char-cnn",
            ModelFamily::Stacker => "stacker",
            ModelFamily::AbLstm => "ab-lstm",
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sampled configuration. `filters` (m) and `filter_width` (s) drive the
/// character CNN and keep their defaults for the other families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub family: ModelFamily,
    /// Left context length ℓ. Always equals `right`.
    pub left: usize,
    /// Right context length r.
    pub right: usize,
    /// Center (keyphrase) token budget c.
    pub center: usize,
    /// CNN filter count m.
    pub filters: usize,
    /// CNN filter width s, in characters.
    pub filter_width: usize,
    /// Characters fed to the char-CNN per context.
    pub char_budget: usize,
    /// Name of the word-embedding table to featurize with.
    pub embedding: String,
    /// Seed for all randomness in this model's training.
    pub seed: u64,
}

/// The multiset the joint left/right context length is drawn from.
pub const CONTEXT_MULTISET: [usize; 11] = [1, 2, 2, 3, 3, 3, 4, 4, 4, 4, 5];

/// Fixed center budget.
pub const CENTER_TOKENS: usize = 4;

/// Largest context length the sampler can draw. Extract training windows at
/// this width so every sampled model can narrow them to its own shape.
pub const MAX_CONTEXT: usize = 5;

/// Value ranges for [`sample_hyperparams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Embedding tables to draw from, uniformly.
    pub embedding_names: Vec<String>,
    /// CNN filter-count distribution: mean and standard deviation.
    pub filters_mean: f64,
    pub filters_std: f64,
    /// CNN filter-width support.
    pub filter_widths: Vec<usize>,
    /// Characters per context for the char-CNN.
    pub char_budget: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            embedding_names: vec![
                "glove-50".into(),
                "glove-100".into(),
                "glove-300".into(),
                "levy-300".into(),
                "komninos-300".into(),
            ],
            filters_mean: 250.0,
            filters_std: 50.0,
            filter_widths: vec![3, 5, 7],
            char_budget: 100,
        }
    }
}

/// Draw one configuration: ℓ = r from [`CONTEXT_MULTISET`], c fixed at 4,
/// the embedding table uniform over the configured set, and for the char-CNN
/// m ~ round(N(mean, std)) clamped to ≥ 1 and s uniform over the width set.
pub fn sample_hyperparams(
    rng: &mut impl Rng,
    family: ModelFamily,
    cfg: &SamplerConfig,
) -> HyperParams {
    assert!(!cfg.embedding_names.is_empty(), "no embedding tables configured");
    let context = CONTEXT_MULTISET[rng.random_range(0..CONTEXT_MULTISET.len())];
    let embedding = cfg.embedding_names[rng.random_range(0..cfg.embedding_names.len())].clone();
    let (filters, filter_width) = match family {
        ModelFamily::CharCnn => {
            let normal = Normal::new(cfg.filters_mean, cfg.filters_std)
                .expect("valid normal parameters");
            let m = normal.sample(rng).round().max(1.0) as usize;
            let s = cfg.filter_widths[rng.random_range(0..cfg.filter_widths.len())];
            (m, s)
        }
        _ => (cfg.filters_mean.round() as usize, cfg.filter_widths[0]),
    };
    let seed = rng.next_u64();
    HyperParams {
        family,
        left: context,
        right: context,
        center: CENTER_TOKENS,
        filters,
        filter_width,
        char_budget: cfg.char_budget,
        embedding,
        seed,
    }
}

/// Training regimen shared by the gradient-trained families, plus the
/// family-specific sub-configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub stacker: StackerConfig,
    pub ab_lstm: AbLstmConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            optimizer: OptimizerKind::adam(2e-3),
            batch_size: 32,
            epochs: 15,
            stacker: StackerConfig::default(),
            ab_lstm: AbLstmConfig::default(),
        }
    }
}

/// Training diagnostics recorded on every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub train_accuracy: f64,
    /// Development-set score, where the family holds one out (stacker meta).
    pub dev_score: Option<f64>,
}

/// Family-specific parameter bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    CharCnn(CharCnnParams),
    Stacker(StackerParams),
    AbLstm(AbLstmParams),
}

/// A trained classifier with its configuration and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub hp: HyperParams,
    pub meta: TrainingMeta,
    pub params: ModelParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("too few instances: need at least {needed}, found {found}")]
    TooFewInstances { needed: usize, found: usize },
    #[error("window shape {found:?} does not match model shape {expected:?}")]
    WindowSizeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("embedding table {0:?} is not loaded")]
    MissingTable(String),
    #[error("input sequence is empty")]
    SequenceTooShort,
    #[error("embedding table {name:?} has dimension {found}, model expects {expected}")]
    TableDimMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("feature vector has length {found}, model expects {expected}")]
    FeatureLengthMismatch { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadFormat { path: String, message: String },
}

/// Label of the highest-probability class, ties resolved in the fixed
/// order M < P < T.
pub fn argmax_label(probs: &[f64; 3]) -> Label {
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("index in range")
}

fn lookup_table<'t>(
    tables: &'t TableSet,
    hp: &HyperParams,
) -> Result<&'t crate::embeddings::EmbeddingTable, ModelError> {
    tables
        .get(&hp.embedding)
        .ok_or_else(|| ModelError::MissingTable(hp.embedding.clone()))
}

/// Train one model of `hp.family` on labeled windows. Deterministic in
/// `hp.seed`: the same configuration and data give identical parameters.
pub fn train(
    hp: &HyperParams,
    data: &[(ContextWindow, Label)],
    tables: &TableSet,
    opts: &TrainOptions,
) -> Result<TrainedModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let (params, meta) = match hp.family {
        ModelFamily::CharCnn => {
            let (p, m) = char_cnn::train_char_cnn(hp, data, opts)?;
            (ModelParams::CharCnn(p), m)
        }
        ModelFamily::Stacker => {
            let table = lookup_table(tables, hp)?;
            let (p, m) = stacker::train_stacker(hp, data, table, &opts.stacker)?;
            (ModelParams::Stacker(p), m)
        }
        ModelFamily::AbLstm => {
            let table = lookup_table(tables, hp)?;
            let (p, m) = ab_lstm::train_ab_lstm(hp, data, table, opts)?;
            (ModelParams::AbLstm(p), m)
        }
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        hp: hp.clone(),
        meta,
        params,
    })
}

/// Class-probability triple for one window. The window shape must match the
/// model's (ℓ, c, r).
pub fn predict_proba(
    model: &TrainedModel,
    window: &ContextWindow,
    tables: &TableSet,
) -> Result<[f64; 3], ModelError> {
    let expected = (model.hp.left, model.hp.center, model.hp.right);
    let found = window.shape();
    if expected != found {
        return Err(ModelError::WindowSizeMismatch { expected, found });
    }
    match &model.params {
        ModelParams::CharCnn(p) => Ok(char_cnn::forward(p, window)),
        ModelParams::Stacker(p) => {
            let table = lookup_table(tables, &model.hp)?;
            stacker::predict_proba(p, window, table)
        }
        ModelParams::AbLstm(p) => {
            let table = lookup_table(tables, &model.hp)?;
            ab_lstm::predict_proba(p, window, table)
        }
    }
}

/// Hard-label prediction: argmax with the fixed tie order.
pub fn predict_label(
    model: &TrainedModel,
    window: &ContextWindow,
    tables: &TableSet,
) -> Result<Label, ModelError> {
    Ok(argmax_label(&predict_proba(model, window, tables)?))
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self).map_err(|e| ModelError::BadFormat {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<TrainedModel, ModelError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let model: TrainedModel =
            serde_json::from_str(&raw).map_err(|e| ModelError::BadFormat {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::BadFormat {
                path: path.display().to_string(),
                message: format!(
                    "unsupported model format version {} (expected {})",
                    model.version, MODEL_FORMAT_VERSION
                ),
            });
        }
        Ok(model)
    }
}

/// One per-instance prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: InstanceKey,
    pub label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<[f64; 3]>,
}

/// Predictions keyed by instance, iterated in key order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    entries: BTreeMap<InstanceKey, Prediction>,
}

/// JSON-lines representation of one prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRecord {
    doc_id: String,
    instance_id: String,
    label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<[f64; 3]>,
}

impl PredictionSet {
    pub fn new() -> Self {
        PredictionSet::default()
    }

    pub fn insert(&mut self, prediction: Prediction) {
        self.entries.insert(prediction.key.clone(), prediction);
    }

    pub fn get(&self, key: &InstanceKey) -> Option<&Prediction> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &InstanceKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Prediction> {
        self.entries.values()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in self.entries.values() {
            let rec = PredictionRecord {
                doc_id: p.key.doc_id.clone(),
                instance_id: p.key.instance_id.clone(),
                label: p.label,
                probs: p.probs,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<PredictionSet> {
        let mut set = PredictionSet::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PredictionRecord = serde_json::from_str(&line)?;
            set.insert(Prediction {
                key: InstanceKey::new(rec.doc_id, rec.instance_id),
                label: rec.label,
                probs: rec.probs,
            });
        }
        Ok(set)
    }
}

impl FromIterator<Prediction> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = Prediction>>(iter: I) -> Self {
        let mut set = PredictionSet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SamplerConfig {
        SamplerConfig::default()
    }

    #[test]
    fn context_draws_follow_the_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 11_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let hp = sample_hyperparams(&mut rng, ModelFamily::Stacker, &cfg());
            assert_eq!(hp.left, hp.right);
            assert_eq!(hp.center, 4);
            counts[hp.left] += 1;
        }
        let expected = [0.0, 1.0 / 11.0, 2.0 / 11.0, 3.0 / 11.0, 4.0 / 11.0, 1.0 / 11.0];
        for v in 1..=5 {
            let freq = counts[v] as f64 / n as f64;
            assert!(
                (freq - expected[v]).abs() < 0.015,
                "ℓ={v}: {freq} vs {}",
                expected[v]
            );
        }
    }

    #[test]
    fn cnn_filter_count_matches_the_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let hp = sample_hyperparams(&mut rng, ModelFamily::CharCnn, &cfg());
            assert!(hp.filters >= 1);
            assert!([3, 5, 7].contains(&hp.filter_width));
            sum += hp.filters as f64;
        }
        let mean = sum / n as f64;
        assert!((245.0..=255.0).contains(&mean), "mean m = {mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_hyperparams(&mut rng, ModelFamily::CharCnn, &cfg()))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn embedding_names_stay_in_the_configured_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        for _ in 0..500 {
            let hp = sample_hyperparams(&mut rng, ModelFamily::AbLstm, &c);
            assert!(c.embedding_names.contains(&hp.embedding));
        }
    }

    #[test]
    fn argmax_breaks_ties_toward_material() {
        let third = 1.0 / 3.0;
        assert_eq!(argmax_label(&[third, third, third]), Label::Material);
        assert_eq!(argmax_label(&[0.2, 0.4, 0.4]), Label::Process);
        assert_eq!(argmax_label(&[0.1, 0.2, 0.7]), Label::Task);
    }

    #[test]
    fn unsupported_model_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(
            &path,
            r#"{"version":99,"hp":{"family":"CharCnn","left":1,"right":1,"center":4,"filters":1,"filter_width":1,"char_budget":4,"embedding":"x","seed":0},"meta":{"epochs_run":0,"final_train_loss":0.0,"train_accuracy":0.0,"dev_score":null},"params":{"CharCnn":{"filters":1,"filter_width":1,"char_budget":4,"bundle":{"blocks":[]}}}}"#,
        )
        .unwrap();
        match TrainedModel::load(&path) {
            Err(ModelError::BadFormat { message, .. }) => {
                assert!(message.contains("version"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prediction_set_roundtrips_jsonl() {
        let mut set = PredictionSet::new();
        set.insert(Prediction {
            key: InstanceKey::new("d2", "T1"),
            label: Label::Process,
            probs: Some([0.1, 0.8, 0.1]),
        });
        set.insert(Prediction {
            key: InstanceKey::new("d1", "T3"),
            label: Label::Material,
            probs: None,
        });
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let back = PredictionSet::read_jsonl(&buf[..]).unwrap();
        assert_eq!(set, back);
        // keys iterate in order
        let keys: Vec<String> = back.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, ["d1/T3", "d2/T1"]);
    }
}
