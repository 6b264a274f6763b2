//! `sciphrase train`: train the configured population, one model file per
//! entry plus a manifest. Reruns skip models whose artifacts verify.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use rayon::prelude::*;

use sciphrase::corpus::{class_counts, load_dataset, InstanceKey, Label};
use sciphrase::ensemble::{plan_population, windows_for, PopulationSpec};
use sciphrase::model::{train, ModelFamily, TrainedModel, CENTER_TOKENS, MAX_CONTEXT};
use sciphrase::stacker::{training_oof, write_oof_csv};
use sciphrase::window::{extract_window, ContextWindow};

use crate::config::{parse_binding, RunConfig};
use crate::manifest::{
    model_file_name, write_json, EntryStatus, ManifestEntry, TrainManifest, MANIFEST_FILE,
    MANIFEST_VERSION,
};
use crate::{config_err, data_err, CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// Flat `key = value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training split directory (overrides `train_dir`)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (overrides `out_dir`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; required here or in the config file
    #[arg(long)]
    pub seed: Option<u64>,
    /// Char-CNN population count
    #[arg(long)]
    pub cnn: Option<usize>,
    /// Stacker population count
    #[arg(long)]
    pub stackers: Option<usize>,
    /// AB-LSTM population count
    #[arg(long)]
    pub lstms: Option<usize>,
    /// Worker threads for parallel model training
    #[arg(long)]
    pub workers: Option<usize>,
    /// Embedding table binding NAME=PATH (repeatable)
    #[arg(long = "embeddings", value_name = "NAME=PATH")]
    pub embeddings: Vec<String>,
    /// Override training epochs for the gradient-trained families
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also write each stacker's out-of-fold matrix as CSV under `oof/`
    #[arg(long)]
    pub audit_oof: bool,
}

fn merged_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(config_err)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.train_dir = Some(d.clone());
    }
    if let Some(o) = &args.out {
        cfg.out_dir = Some(o.clone());
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.cnn.is_some() {
        cfg.n_cnn = args.cnn;
    }
    if args.stackers.is_some() {
        cfg.n_stacker = args.stackers;
    }
    if args.lstms.is_some() {
        cfg.n_lstm = args.lstms;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if args.epochs.is_some() {
        cfg.epochs = args.epochs;
    }
    for binding in &args.embeddings {
        let (name, path) = parse_binding(binding).map_err(config_err)?;
        cfg.embeddings.insert(name, path);
    }
    Ok(cfg)
}

pub fn run(args: TrainArgs) -> CliResult {
    let cfg = merged_config(&args)?;
    let master_seed = cfg
        .seed
        .ok_or_else(|| config_err(anyhow!("seed is required (no wall-clock default)")))?;
    let train_dir = cfg
        .train_dir
        .clone()
        .ok_or_else(|| config_err(anyhow!("train_dir is required")))?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| config_err(anyhow!("out_dir is required")))?;
    let spec = PopulationSpec {
        n_cnn: cfg.n_cnn.unwrap_or(56),
        n_stacker: cfg.n_stacker.unwrap_or(90),
        n_lstm: cfg.n_lstm.unwrap_or(20),
        master_seed,
    };
    let sampler = cfg.sampler_config().map_err(config_err)?;
    let opts = cfg.train_options();

    let dataset = load_dataset(&train_dir).map_err(data_err)?;
    let counts = class_counts(&dataset).map_err(data_err)?;
    let mut data: Vec<(ContextWindow, Label)> = Vec::new();
    let mut keys: Vec<InstanceKey> = Vec::new();
    for doc in &dataset.documents {
        for inst in &doc.instances {
            let label = inst.gold_label.ok_or_else(|| {
                data_err(anyhow!("{}/{} has no gold label", doc.doc_id, inst.id))
            })?;
            let window = extract_window(doc, inst, MAX_CONTEXT, CENTER_TOKENS, MAX_CONTEXT)
                .map_err(data_err)?;
            data.push((window, label));
            keys.push(InstanceKey::new(doc.doc_id.clone(), inst.id.clone()));
        }
    }
    if data.is_empty() {
        return Err(data_err(anyhow!("{} has no instances", train_dir.display())));
    }

    let tables = super::load_tables(&cfg.embeddings).map_err(data_err)?;
    let plan = plan_population(&spec, &sampler).map_err(config_err)?;

    let models_dir = out_dir.join("models");
    super::ensure_dir(&models_dir).map_err(data_err)?;

    // resume: a model artifact counts when it loads and matches the plan
    let statuses: Vec<Option<EntryStatus>> = plan
        .iter()
        .enumerate()
        .map(|(index, hp)| {
            let path = models_dir.join(model_file_name(index));
            match TrainedModel::load(&path) {
                Ok(model) if &model.hp == hp => Some(EntryStatus::Trained {
                    metrics: model.meta,
                }),
                _ => None,
            }
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| config_err(anyhow!("building worker pool: {e}")))?;

    let trained: Vec<(usize, EntryStatus)> = pool.install(|| {
        plan.par_iter()
            .enumerate()
            .zip(statuses.par_iter())
            .filter(|(_, status)| status.is_none())
            .map(|((index, hp), _)| {
                let model_data = windows_for(hp, &data);
                let status = match train(hp, &model_data, &tables, &opts) {
                    Ok(model) => {
                        let path = models_dir.join(model_file_name(index));
                        match model.save(&path) {
                            Ok(()) => EntryStatus::Trained {
                                metrics: model.meta,
                            },
                            Err(e) => EntryStatus::Failed {
                                error: e.to_string(),
                            },
                        }
                    }
                    Err(e) => EntryStatus::Failed {
                        error: e.to_string(),
                    },
                };
                (index, status)
            })
            .collect()
    });

    let mut final_statuses = statuses;
    for (index, status) in trained {
        final_statuses[index] = Some(status);
    }

    let entries: Vec<ManifestEntry> = plan
        .iter()
        .enumerate()
        .map(|(index, hp)| ManifestEntry {
            index,
            family: hp.family,
            hp: hp.clone(),
            file: model_file_name(index),
            status: final_statuses[index].clone().expect("status filled"),
        })
        .collect();

    let failed: Vec<usize> = entries
        .iter()
        .filter(|e| matches!(e.status, EntryStatus::Failed { .. }))
        .map(|e| e.index)
        .collect();

    if args.audit_oof {
        let oof_dir = out_dir.join("oof");
        super::ensure_dir(&oof_dir).map_err(data_err)?;
        let labels: Vec<Label> = data.iter().map(|(_, y)| *y).collect();
        for (index, hp) in plan.iter().enumerate() {
            if hp.family != ModelFamily::Stacker {
                continue;
            }
            let table = tables
                .get(&hp.embedding)
                .ok_or_else(|| data_err(anyhow!("table {} not loaded", hp.embedding)))?;
            let model_data = windows_for(hp, &data);
            let oof = training_oof(hp, &model_data, table, &opts.stacker).map_err(data_err)?;
            let path = oof_dir.join(format!("oof_{index:04}.csv"));
            let mut file = std::fs::File::create(&path)
                .map_err(|e| data_err(anyhow!("creating {}: {e}", path.display())))?;
            write_oof_csv(&oof, &keys, &labels, &opts.stacker.roster, &mut file)
                .map_err(data_err)?;
        }
    }

    let manifest = TrainManifest {
        version: MANIFEST_VERSION,
        master_seed,
        n_cnn: spec.n_cnn,
        n_stacker: spec.n_stacker,
        n_lstm: spec.n_lstm,
        train_instances: data.len(),
        train_class_counts: counts,
        embedding_names: sampler.embedding_names.clone(),
        entries,
    };
    write_json(&manifest, &out_dir.join(MANIFEST_FILE)).map_err(data_err)?;

    for entry in &manifest.entries {
        match &entry.status {
            EntryStatus::Trained { metrics } => println!(
                "model {:04} {:<8} trained  train_acc={:.3}",
                entry.index,
                entry.family.to_string(),
                metrics.train_accuracy
            ),
            EntryStatus::Failed { error } => {
                println!("model {:04} {:<8} FAILED   {error}", entry.index, entry.family.to_string())
            }
        }
    }
    println!(
        "{} models, {} failed; manifest at {}",
        manifest.entries.len(),
        failed.len(),
        out_dir.join(MANIFEST_FILE).display()
    );

    if failed.is_empty() {
        Ok(())
    } else {
        Err(data_err(anyhow!("{} model(s) failed to train", failed.len())))
    }
}
