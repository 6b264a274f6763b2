//! `sciphrase score`: compare a prediction file against a gold dump.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use sciphrase::corpus::read_instance_dump;
use sciphrase::eval::{confusion, error_analysis, gold_labels, render_text, scores, ErrorReport, EvalReport};
use sciphrase::model::PredictionSet;

use crate::manifest::write_json;
use crate::{data_err, CliResult};

#[derive(Args)]
pub struct ScoreArgs {
    /// Gold JSON-lines instance dump (from `ingest`)
    #[arg(long)]
    pub gold: PathBuf,
    /// Prediction file (from `predict` or `vote`)
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the full report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include grouped error exemplars
    #[arg(long)]
    pub errors: bool,
}

#[derive(Serialize)]
struct FullReport {
    #[serde(flatten)]
    scores: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    errors: Option<ErrorReport>,
}

pub fn run(args: ScoreArgs) -> CliResult {
    let gold_file = File::open(&args.gold)
        .with_context(|| format!("opening {}", args.gold.display()))
        .map_err(data_err)?;
    let records = read_instance_dump(BufReader::new(gold_file)).map_err(data_err)?;
    let gold = gold_labels(&records).map_err(data_err)?;

    let pred_file = File::open(&args.pred)
        .with_context(|| format!("opening {}", args.pred.display()))
        .map_err(data_err)?;
    let pred = PredictionSet::read_jsonl(BufReader::new(pred_file)).map_err(data_err)?;

    let cm = confusion(&gold, &pred).map_err(data_err)?;
    let report = scores(&cm).map_err(data_err)?;
    print!("{}", render_text(&report));

    let errors = if args.errors {
        let analysis = error_analysis(&records, &pred).map_err(data_err)?;
        for group in &analysis.groups {
            println!(
                "gold {} -> predicted {}: {} instance(s)",
                group.gold, group.predicted, group.total
            );
            for s in group.surfaces.iter().take(5) {
                println!("    {:>3}x {:?}", s.count, s.surface);
            }
        }
        Some(analysis)
    } else {
        None
    };

    if let Some(json_path) = args.json {
        write_json(
            &FullReport {
                scores: report,
                errors,
            },
            &json_path,
        )
        .map_err(data_err)?;
    }
    Ok(())
}
