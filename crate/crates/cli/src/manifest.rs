//! Run manifests: everything needed to resume, predict and vote without
//! re-deriving anything from the RNG.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use sciphrase::model::{HyperParams, ModelFamily, TrainingMeta};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_MANIFEST_FILE: &str = "predictions.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub version: u32,
    pub master_seed: u64,
    pub n_cnn: usize,
    pub n_stacker: usize,
    pub n_lstm: usize,
    pub train_instances: usize,
    /// Gold class counts of the training split, Material/Process/Task order.
    pub train_class_counts: [usize; 3],
    pub embedding_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub family: ModelFamily,
    pub hp: HyperParams,
    /// File name relative to the models directory.
    pub file: String,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryStatus {
    Trained { metrics: TrainingMeta },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsManifest {
    pub version: u32,
    pub train_class_counts: [usize; 3],
    pub entries: Vec<PredictionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub index: usize,
    pub family: ModelFamily,
    /// File name relative to the predictions directory.
    pub file: String,
}

pub fn model_file_name(index: usize) -> String {
    format!("model_{index:04}.json")
}

pub fn prediction_file_name(index: usize) -> String {
    format!("predictions_{index:04}.jsonl")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}
