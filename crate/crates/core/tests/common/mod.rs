//! Helpers shared by the integration tests. Each test binary compiles this
//! module separately and uses a different subset of it.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sciphrase::corpus::Label;
use sciphrase::embeddings::{EmbeddingTable, TableSet};
use sciphrase::window::{ContextWindow, Slot};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory exists")
}

pub const MATERIAL_WORDS: [&str; 10] = [
    "iron", "copper", "brass", "oxide", "graphene", "zirconia", "quartz", "epoxy", "silica",
    "nickel",
];
pub const PROCESS_WORDS: [&str; 10] = [
    "annealing",
    "sintering",
    "etching",
    "milling",
    "sputtering",
    "ablation",
    "lithography",
    "spectroscopy",
    "deposition",
    "calorimetry",
];
pub const TASK_WORDS: [&str; 10] = [
    "parsing",
    "tagging",
    "ranking",
    "segmentation",
    "classification",
    "recognition",
    "retrieval",
    "summarization",
    "clustering",
    "alignment",
];

/// A 30-instance synthetic set (10 per class) with distinct center words,
/// plus an embedding table that carries the class signal. Windows use the
/// shape ℓ = r = 2, c = 4.
pub fn synthetic_training(seed: u64) -> (Vec<(ContextWindow, Label)>, TableSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut data = Vec::new();
    let groups = [
        (Label::Material, MATERIAL_WORDS),
        (Label::Process, PROCESS_WORDS),
        (Label::Task, TASK_WORDS),
    ];
    for (label, words) in groups {
        for word in words {
            let mut v = vec![0.0; 5];
            v[label.index()] = 2.0;
            for x in v.iter_mut() {
                *x += rng.random_range(-0.2..0.2);
            }
            entries.push((word.to_string(), v));
            let window = ContextWindow::new(
                vec![Slot::word("the"), Slot::word("of")],
                vec![Slot::word(word), Slot::Pad, Slot::Pad, Slot::Pad],
                vec![Slot::word("was"), Slot::word("used")],
            );
            data.push((window, label));
        }
    }
    for ctx in ["the", "of", "was", "used"] {
        entries.push((
            ctx.to_string(),
            (0..5).map(|_| rng.random_range(-0.1..0.1)).collect(),
        ));
    }
    let table = EmbeddingTable::from_entries("toy-synth", 5, entries).unwrap();
    let mut tables = TableSet::new();
    tables.insert(table);
    (data, tables)
}
