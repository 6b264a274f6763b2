//! `sciphrase report`: per-instance vote histograms and margins.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use sciphrase::ensemble::{vote_margin_report, EnsembleComposition};

use crate::commands::vote::load_voters;
use crate::{data_err, CliResult};

#[derive(Args)]
pub struct ReportArgs {
    /// Predictions directory written by `predict`
    #[arg(long)]
    pub predictions: PathBuf,
    /// Which families vote: s, sc, or scl
    #[arg(long, value_parser = ["s", "sc", "scl"], default_value = "scl")]
    pub composition: String,
    /// Output JSON-lines margin report
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ReportArgs) -> CliResult {
    let composition =
        EnsembleComposition::parse_flag(&args.composition).expect("validated by clap");
    let (voters, _) = load_voters(&args.predictions).map_err(data_err)?;
    let records = vote_margin_report(&voters, &composition).map_err(data_err)?;

    let file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(data_err)?;
    let mut out = BufWriter::new(file);
    for r in &records {
        serde_json::to_writer(&mut out, r).map_err(data_err)?;
        out.write_all(b"\n").map_err(data_err)?;
    }
    out.flush().map_err(data_err)?;

    let ties = records.iter().filter(|r| r.tie).count();
    let mean_margin =
        records.iter().map(|r| r.margin as f64).sum::<f64>() / records.len().max(1) as f64;
    println!(
        "{} instances, mean margin {:.2}, {} tie(s)",
        records.len(),
        mean_margin,
        ties
    );
    Ok(())
}
