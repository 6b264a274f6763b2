//! `sciphrase vote`: majority-vote a predictions directory into one file.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use sciphrase::ensemble::{majority_vote, EnsembleComposition, TieBreak};
use sciphrase::model::{ModelFamily, PredictionSet};

use crate::manifest::{read_json, PredictionsManifest, PREDICTIONS_MANIFEST_FILE};
use crate::{data_err, CliResult};

#[derive(Args)]
pub struct VoteArgs {
    /// Predictions directory written by `predict`
    #[arg(long)]
    pub predictions: PathBuf,
    /// Which families vote: s = stackers, sc = +CNNs, scl = all three
    #[arg(long, value_parser = ["s", "sc", "scl"], default_value = "scl")]
    pub composition: String,
    /// Output voted prediction file
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_voters(dir: &Path) -> anyhow::Result<(Vec<(ModelFamily, PredictionSet)>, TieBreak)> {
    let manifest: PredictionsManifest = read_json(&dir.join(PREDICTIONS_MANIFEST_FILE))?;
    let mut voters = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = dir.join(&entry.file);
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let set = PredictionSet::read_jsonl(BufReader::new(file))
            .with_context(|| format!("parsing {}", path.display()))?;
        voters.push((entry.family, set));
    }
    Ok((voters, TieBreak::from_counts(manifest.train_class_counts)))
}

pub fn run(args: VoteArgs) -> CliResult {
    let composition =
        EnsembleComposition::parse_flag(&args.composition).expect("validated by clap");
    let (voters, tie) = load_voters(&args.predictions).map_err(data_err)?;
    let voted = majority_vote(&voters, &composition, &tie).map_err(data_err)?;
    let file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(data_err)?;
    voted.write_jsonl(BufWriter::new(file)).map_err(data_err)?;
    println!(
        "voted {} instances ({} voters, composition {})",
        voted.len(),
        voters
            .iter()
            .filter(|(f, _)| composition.includes(*f))
            .count(),
        args.composition
    );
    Ok(())
}
