//! `sciphrase ingest`: parse a split directory, write the instance dump,
//! and print the class distribution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use sciphrase::corpus::{class_counts, dump_instances, load_dataset, write_instance_dump, Label};
use sciphrase::model::{CENTER_TOKENS, MAX_CONTEXT};
use sciphrase::window::extract_window;

use crate::{data_err, CliResult};

#[derive(Args)]
pub struct IngestArgs {
    /// Directory of paired `<id>.txt` / `<id>.ann` files
    #[arg(long)]
    pub data: PathBuf,
    /// Output JSON-lines instance dump
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump (ℓ=5, c=4, r=5) context windows as JSON-lines, for debugging
    #[arg(long)]
    pub windows: Option<PathBuf>,
}

#[derive(Serialize)]
struct WindowRecord<'a> {
    doc_id: &'a str,
    instance_id: &'a str,
    window: sciphrase::window::ContextWindow,
}

pub fn run(args: IngestArgs) -> CliResult {
    let dataset = load_dataset(&args.data).map_err(data_err)?;
    let records = dump_instances(&dataset);
    let file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(data_err)?;
    let mut out = BufWriter::new(file);
    write_instance_dump(&records, &mut out).map_err(data_err)?;
    out.flush().map_err(data_err)?;

    if records.is_empty() {
        eprintln!(
            "warning: {} contains no documents; wrote an empty dump",
            args.data.display()
        );
        return Ok(());
    }

    let counts = class_counts(&dataset).map_err(data_err)?;
    let total: usize = counts.iter().sum();
    let pct = |k: usize| (100.0 * counts[k] as f64 / total as f64).round() as i64;
    println!("{} documents, {} instances", dataset.documents.len(), total);
    println!("{:<12} {:>9} {:>9} {:>9}", "", "Material", "Process", "Task");
    println!(
        "{:<12} {:>8}% {:>8}% {:>8}%",
        dataset.split_name,
        pct(Label::Material.index()),
        pct(Label::Process.index()),
        pct(Label::Task.index())
    );

    if let Some(windows_path) = args.windows {
        let file = File::create(&windows_path)
            .with_context(|| format!("creating {}", windows_path.display()))
            .map_err(data_err)?;
        let mut out = BufWriter::new(file);
        for doc in &dataset.documents {
            for inst in &doc.instances {
                let window = extract_window(doc, inst, MAX_CONTEXT, CENTER_TOKENS, MAX_CONTEXT)
                    .map_err(data_err)?;
                let rec = WindowRecord {
                    doc_id: &doc.doc_id,
                    instance_id: &inst.id,
                    window,
                };
                serde_json::to_writer(&mut out, &rec).map_err(data_err)?;
                out.write_all(b"\n").map_err(data_err)?;
            }
        }
        out.flush().map_err(data_err)?;
    }
    Ok(())
}
