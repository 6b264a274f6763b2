//! Classification of pre-identified keyphrases in scientific text into the
//! classes `Material`, `Process` and `Task`.
//!
//! The crate covers the full pipeline:
//!
//! * [`corpus`]: standoff-annotated corpus parsing and statistics,
//! * [`window`]: tokenization and fixed-size (left, center, right) context windows,
//! * [`embeddings`]: pre-trained word-embedding tables and window featurization,
//! * [`model`]: the common classifier contract and hyperparameter sampling,
//! * [`char_cnn`], [`stacker`], [`ab_lstm`]: the three model families,
//! * [`ensemble`]: population training and majority voting,
//! * [`eval`]: confusion matrices, F1 scores and error analysis.
//!
//! All training is deterministic given a seed: the same [`model::HyperParams`]
//! and data produce bitwise-identical parameters and predictions.

// indexed loops keep the numeric kernels aligned with their math
#![allow(clippy::needless_range_loop)]

pub mod ab_lstm;
pub mod char_cnn;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod eval;
pub mod model;
pub mod nn;
pub mod stacker;
pub mod window;

pub use corpus::{Dataset, Document, KeyphraseInstance, Label};
pub use embeddings::{EmbeddingTable, FeatureVector, TableSet};
pub use model::{HyperParams, ModelFamily, Prediction, PredictionSet, TrainedModel};
pub use window::{ContextWindow, Slot, Token};
