//! Population training and majority voting.
//!
//! A population is a set of independently hyperparameter-sampled models per
//! family (56 CNNs, 90 stackers, 20 AB-LSTMs at full scale). Per-model
//! seeds derive from the master seed through a splittable counter scheme,
//! so populations are reproducible and extensible: adding models never
//! changes the ones already trained.
//!
//! Votes are hard labels. Ties break by training-split class frequency
//! (descending), then by the fixed order M < P < T.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceKey, Label};
use crate::embeddings::TableSet;
use crate::model::{
    sample_hyperparams, train, HyperParams, ModelError, ModelFamily, Prediction, PredictionSet,
    SamplerConfig, TrainOptions, TrainedModel,
};
use crate::nn::derive_seed;
use crate::window::ContextWindow;

/// How many models to train per family, and the seed everything derives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_cnn: usize,
    pub n_stacker: usize,
    pub n_lstm: usize,
    pub master_seed: u64,
}

impl PopulationSpec {
    /// The population sizes used for the full-scale runs.
    pub fn full_scale(master_seed: u64) -> Self {
        PopulationSpec {
            n_cnn: 56,
            n_stacker: 90,
            n_lstm: 20,
            master_seed,
        }
    }

    pub fn total(&self) -> usize {
        self.n_cnn + self.n_stacker + self.n_lstm
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("population is empty: all family counts are zero")]
    EmptyPopulation,
    #[error("no voters match the requested composition")]
    NoVoters,
    #[error("training model {index} ({family}) failed: {source}")]
    ModelTraining {
        index: usize,
        family: ModelFamily,
        #[source]
        source: ModelError,
    },
    #[error("voter {voter} has no prediction for instance {key}")]
    MissingPrediction { voter: usize, key: InstanceKey },
}

fn family_ordinal(family: ModelFamily) -> u64 {
    match family {
        ModelFamily::CharCnn => 0,
        ModelFamily::Stacker => 1,
        ModelFamily::AbLstm => 2,
    }
}

/// Seed stream id for model `index` of `family`.
fn model_stream(family: ModelFamily, index: usize) -> u64 {
    family_ordinal(family) * 1_000_000 + index as u64
}

/// Deterministically sample the hyperparameters of every model in the
/// population: CNNs first, then stackers, then AB-LSTMs.
pub fn plan_population(
    spec: &PopulationSpec,
    sampler: &SamplerConfig,
) -> Result<Vec<HyperParams>, EnsembleError> {
    if spec.total() == 0 {
        return Err(EnsembleError::EmptyPopulation);
    }
    let mut plan = Vec::with_capacity(spec.total());
    let groups = [
        (ModelFamily::CharCnn, spec.n_cnn),
        (ModelFamily::Stacker, spec.n_stacker),
        (ModelFamily::AbLstm, spec.n_lstm),
    ];
    for (family, count) in groups {
        for index in 0..count {
            let seed = derive_seed(spec.master_seed, model_stream(family, index));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            plan.push(sample_hyperparams(&mut rng, family, sampler));
        }
    }
    Ok(plan)
}

/// Train the whole population. Models are independent and train in
/// parallel; failures carry the model index.
///
/// `data` windows must be extracted at the widest sampled shape
/// (ℓ = r = 5, c = 4); each model narrows them to its own shape. Narrowing
/// is exactly equivalent to re-extracting at the smaller shape.
pub fn train_population(
    spec: &PopulationSpec,
    data: &[(ContextWindow, Label)],
    tables: &TableSet,
    opts: &TrainOptions,
    sampler: &SamplerConfig,
) -> Result<Vec<TrainedModel>, EnsembleError> {
    let plan = plan_population(spec, sampler)?;
    let results: Vec<Result<TrainedModel, EnsembleError>> = plan
        .par_iter()
        .enumerate()
        .map(|(index, hp)| {
            // each model re-extracts windows for its own (ℓ, c, r)
            train(hp, &windows_for(hp, data), tables, opts).map_err(|source| {
                EnsembleError::ModelTraining {
                    index,
                    family: hp.family,
                    source,
                }
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Re-shape training windows to a model's own (ℓ, c, r) by truncating or
/// padding each side. Training data is extracted once at the maximum shape
/// and narrowed per model.
pub fn windows_for(
    hp: &HyperParams,
    data: &[(ContextWindow, Label)],
) -> Vec<(ContextWindow, Label)> {
    data.iter()
        .map(|(w, y)| (reshape_window(w, hp.left, hp.center, hp.right), *y))
        .collect()
}

/// Narrow or pad a window to the requested shape: left keeps its innermost
/// tokens, center and right keep their first tokens.
pub fn reshape_window(
    w: &ContextWindow,
    left: usize,
    center: usize,
    right: usize,
) -> ContextWindow {
    use crate::window::Slot;
    let mut l = w.left.clone();
    while l.len() < left {
        l.insert(0, Slot::Pad);
    }
    let skip = l.len() - left;
    let l: Vec<Slot> = l.into_iter().skip(skip).collect();
    let fit = |mut v: Vec<Slot>, n: usize| {
        v.truncate(n);
        while v.len() < n {
            v.push(Slot::Pad);
        }
        v
    };
    ContextWindow::new(l, fit(w.center.clone(), center), fit(w.right.clone(), right))
}

/// Which families may vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleComposition {
    families: BTreeSet<ModelFamily>,
}

impl EnsembleComposition {
    pub fn new(families: impl IntoIterator<Item = ModelFamily>) -> Self {
        let families: BTreeSet<ModelFamily> = families.into_iter().collect();
        assert!(!families.is_empty(), "composition cannot be empty");
        EnsembleComposition { families }
    }

    /// Submission (1): stackers only.
    pub fn stackers() -> Self {
        Self::new([ModelFamily::Stacker])
    }

    /// Submission (2): stackers and CNNs.
    pub fn stackers_cnns() -> Self {
        Self::new([ModelFamily::Stacker, ModelFamily::CharCnn])
    }

    /// Submission (3): all three families.
    pub fn all() -> Self {
        Self::new(ModelFamily::ALL)
    }

    /// Flag syntax: `s`, `sc`, `scl`.
    pub fn parse_flag(flag: &str) -> Option<Self> {
        match flag {
            "s" => Some(Self::stackers()),
            "sc" => Some(Self::stackers_cnns()),
            "scl" => Some(Self::all()),
            _ => None,
        }
    }

    pub fn includes(&self, family: ModelFamily) -> bool {
        self.families.contains(&family)
    }
}

/// Tie-breaking context: class frequencies observed in the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieBreak {
    /// Fractions (or counts) per class, [`Label::ALL`] order.
    pub class_frequency: [f64; 3],
}

impl Default for TieBreak {
    fn default() -> Self {
        // train+dev distribution of the task corpus: 40% / 44% / 16%
        TieBreak {
            class_frequency: [0.40, 0.44, 0.16],
        }
    }
}

impl TieBreak {
    pub fn from_counts(counts: [usize; 3]) -> Self {
        TieBreak {
            class_frequency: [counts[0] as f64, counts[1] as f64, counts[2] as f64],
        }
    }

    /// Most votes wins; ties go to the more frequent training class, then to
    /// the fixed order M < P < T.
    pub fn winner(&self, votes: [usize; 3]) -> Label {
        let mut best = 0usize;
        for k in 1..3 {
            let better = votes[k] > votes[best]
                || (votes[k] == votes[best] && self.class_frequency[k] > self.class_frequency[best]);
            if better {
                best = k;
            }
        }
        Label::from_index(best).expect("index in range")
    }
}

fn participating<'v>(
    voters: &'v [(ModelFamily, PredictionSet)],
    composition: &EnsembleComposition,
) -> Vec<(usize, &'v PredictionSet)> {
    voters
        .iter()
        .enumerate()
        .filter(|(_, (family, _))| composition.includes(*family))
        .map(|(i, (_, set))| (i, set))
        .collect()
}

fn union_keys<'v>(sets: &[(usize, &'v PredictionSet)]) -> BTreeSet<&'v InstanceKey> {
    sets.iter().flat_map(|(_, s)| s.keys()).collect()
}

fn tally(
    sets: &[(usize, &PredictionSet)],
    key: &InstanceKey,
) -> Result<[usize; 3], EnsembleError> {
    let mut votes = [0usize; 3];
    for (voter, set) in sets {
        let p = set.get(key).ok_or_else(|| EnsembleError::MissingPrediction {
            voter: *voter,
            key: key.clone(),
        })?;
        votes[p.label.index()] += 1;
    }
    Ok(votes)
}

/// Simple majority vote over every instance all participating voters
/// predicted. Every voter must cover every instance.
pub fn majority_vote(
    voters: &[(ModelFamily, PredictionSet)],
    composition: &EnsembleComposition,
    tie: &TieBreak,
) -> Result<PredictionSet, EnsembleError> {
    let sets = participating(voters, composition);
    if sets.is_empty() {
        return Err(EnsembleError::NoVoters);
    }
    let mut out = PredictionSet::new();
    for key in union_keys(&sets) {
        let votes = tally(&sets, key)?;
        out.insert(Prediction {
            key: key.clone(),
            label: tie.winner(votes),
            probs: None,
        });
    }
    Ok(out)
}

/// Per-instance vote histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub doc_id: String,
    pub instance_id: String,
    /// votes per class, [`Label::ALL`] order; sums to the voter count
    pub votes: [usize; 3],
    /// winner votes minus runner-up votes; 0 on a tie
    pub margin: usize,
    pub tie: bool,
}

/// Vote histograms and winning margins, keyed like the vote itself.
pub fn vote_margin_report(
    voters: &[(ModelFamily, PredictionSet)],
    composition: &EnsembleComposition,
) -> Result<Vec<MarginRecord>, EnsembleError> {
    let sets = participating(voters, composition);
    if sets.is_empty() {
        return Err(EnsembleError::NoVoters);
    }
    let mut records = Vec::new();
    for key in union_keys(&sets) {
        let votes = tally(&sets, key)?;
        let mut sorted = votes;
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let tie = sorted[0] == sorted[1];
        records.push(MarginRecord {
            doc_id: key.doc_id.clone(),
            instance_id: key.instance_id.clone(),
            votes,
            margin: if tie { 0 } else { sorted[0] - sorted[1] },
            tie,
        });
    }
    Ok(records)
}
