//! `sciphrase predict`: one prediction file per trained model.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;

use sciphrase::corpus::{load_dataset, InstanceKey};
use sciphrase::model::{predict_proba, Prediction, PredictionSet, TrainedModel};
use sciphrase::window::extract_window;

use crate::config::parse_binding;
use crate::manifest::{
    prediction_file_name, read_json, write_json, EntryStatus, PredictionEntry,
    PredictionsManifest, TrainManifest, MANIFEST_FILE, MANIFEST_VERSION,
    PREDICTIONS_MANIFEST_FILE,
};
use crate::{config_err, data_err, CliResult};

#[derive(Args)]
pub struct PredictArgs {
    /// Training output directory (holds manifest.json and models/)
    #[arg(long)]
    pub models: PathBuf,
    /// Data split to predict
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for prediction files
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding table binding NAME=PATH (repeatable)
    #[arg(long = "embeddings", value_name = "NAME=PATH")]
    pub embeddings: Vec<String>,
}

pub fn run(args: PredictArgs) -> CliResult {
    let manifest: TrainManifest =
        read_json(&args.models.join(MANIFEST_FILE)).map_err(data_err)?;
    let mut bindings = std::collections::BTreeMap::new();
    for binding in &args.embeddings {
        let (name, path) = parse_binding(binding).map_err(config_err)?;
        bindings.insert(name, path);
    }
    let tables = super::load_tables(&bindings).map_err(data_err)?;
    let dataset = load_dataset(&args.data).map_err(data_err)?;
    super::ensure_dir(&args.out).map_err(data_err)?;

    let mut entries = Vec::new();
    for entry in &manifest.entries {
        let EntryStatus::Trained { .. } = entry.status else {
            eprintln!("warning: skipping failed model {:04}", entry.index);
            continue;
        };
        let model_path = args.models.join("models").join(&entry.file);
        let model = TrainedModel::load(&model_path).map_err(data_err)?;

        let mut set = PredictionSet::new();
        for doc in &dataset.documents {
            for inst in &doc.instances {
                let window = extract_window(doc, inst, model.hp.left, model.hp.center, model.hp.right)
                    .map_err(data_err)?;
                let probs = predict_proba(&model, &window, &tables).map_err(data_err)?;
                set.insert(Prediction {
                    key: InstanceKey::new(doc.doc_id.clone(), inst.id.clone()),
                    label: sciphrase::model::argmax_label(&probs),
                    probs: Some(probs),
                });
            }
        }
        let file_name = prediction_file_name(entry.index);
        let path = args.out.join(&file_name);
        let file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(data_err)?;
        set.write_jsonl(BufWriter::new(file)).map_err(data_err)?;
        entries.push(PredictionEntry {
            index: entry.index,
            family: entry.family,
            file: file_name,
        });
    }
    if entries.is_empty() {
        return Err(data_err(anyhow!("no trained models in {}", args.models.display())));
    }

    let pm = PredictionsManifest {
        version: MANIFEST_VERSION,
        train_class_counts: manifest.train_class_counts,
        entries,
    };
    write_json(&pm, &args.out.join(PREDICTIONS_MANIFEST_FILE)).map_err(data_err)?;
    println!(
        "wrote {} prediction files to {}",
        pm.entries.len(),
        args.out.display()
    );
    Ok(())
}
