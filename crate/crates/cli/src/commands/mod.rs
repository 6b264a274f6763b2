pub mod ingest;
pub mod predict;
pub mod report;
pub mod score;
pub mod train;
pub mod vote;

use std::path::Path;

use anyhow::{Context, Result};

use sciphrase::embeddings::{EmbeddingTable, TableSet};

/// Load every bound embedding table, printing duplicate-token warnings.
pub fn load_tables(bindings: &std::collections::BTreeMap<String, std::path::PathBuf>) -> Result<TableSet> {
    let mut tables = TableSet::new();
    for (name, path) in bindings {
        let (table, warnings) = EmbeddingTable::load(name, path, None)
            .with_context(|| format!("loading embedding table {name} from {}", path.display()))?;
        for w in warnings {
            eprintln!("warning: {name}: {w}");
        }
        tables.insert(table);
    }
    Ok(tables)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
