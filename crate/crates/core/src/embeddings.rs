//! Pre-trained word-embedding tables and window featurization.
//!
//! Tables are loaded from the plain text format used by Glove-style
//! releases: one entry per line, a token followed by `d` whitespace-separated
//! decimal floats. Lookups try the exact token first and fall back to its
//! lowercase form, since general-domain tables are typically lowercased
//! while scientific text is case-rich. Padding and out-of-vocabulary tokens
//! both map to the zero vector.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::window::ContextWindow;

/// An in-memory token → ℝ^d map with a declared dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    MalformedEntry { line: usize, message: String },
    #[error("embedding file contains no entries")]
    EmptyTable,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Non-fatal observations from table loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// The token already had a vector; the first one is kept.
    DuplicateToken { token: String, line: usize },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::DuplicateToken { token, line } => {
                write!(f, "line {line}: duplicate token {token:?}, keeping first")
            }
        }
    }
}

impl EmbeddingTable {
    /// Build a table from explicit entries. Intended for tests and toy data.
    pub fn from_entries<I, S>(name: &str, dim: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut vectors = HashMap::new();
        for (i, (token, vec)) in entries.into_iter().enumerate() {
            if vec.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: vec.len(),
                });
            }
            vectors.insert(token.into(), vec);
        }
        Ok(EmbeddingTable {
            name: name.to_string(),
            dim,
            vectors,
        })
    }

    /// Load a text-format table. If `expected_dim` is given, every line must
    /// match it; otherwise the first line fixes the dimension.
    pub fn load(
        name: &str,
        path: &Path,
        expected_dim: Option<usize>,
    ) -> Result<(Self, Vec<LoadWarning>), EmbeddingError> {
        let file = File::open(path).map_err(|e| EmbeddingError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut warnings = Vec::new();
        let mut dim = expected_dim;
        let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();

        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| EmbeddingError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line has a first field");
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| EmbeddingError::MalformedEntry {
                        line: line_no,
                        message: format!("not a number: {p:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            match dim {
                None => {
                    if values.is_empty() {
                        return Err(EmbeddingError::MalformedEntry {
                            line: line_no,
                            message: "entry has no vector components".into(),
                        });
                    }
                    dim = Some(values.len());
                }
                Some(d) => {
                    if values.len() != d {
                        return Err(EmbeddingError::DimensionMismatch {
                            line: line_no,
                            expected: d,
                            found: values.len(),
                        });
                    }
                }
            }
            if vectors.contains_key(token) {
                warnings.push(LoadWarning::DuplicateToken {
                    token: token.to_string(),
                    line: line_no,
                });
            } else {
                vectors.insert(token.to_string(), values);
            }
        }

        let dim = dim.ok_or(EmbeddingError::EmptyTable)?;
        Ok((
            EmbeddingTable {
                name: name.to_string(),
                dim,
                vectors,
            },
            warnings,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact-case lookup, then lowercase fallback. `None` means OOV.
    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        if let Some(v) = self.vectors.get(token) {
            return Some(v);
        }
        let lower = token.to_lowercase();
        if lower != token {
            return self.vectors.get(lower.as_str()).map(Vec::as_slice);
        }
        None
    }

    /// Scale every stored vector in place. Used by tests for linearity checks.
    pub fn scale(&mut self, alpha: f64) {
        for v in self.vectors.values_mut() {
            for x in v.iter_mut() {
                *x *= alpha;
            }
        }
    }
}

/// A named collection of loaded tables.
#[derive(Debug, Clone, Default)]
pub struct TableSet {
    tables: BTreeMap<String, EmbeddingTable>,
}

impl TableSet {
    pub fn new() -> Self {
        TableSet::default()
    }

    pub fn insert(&mut self, table: EmbeddingTable) {
        self.tables.insert(table.name().to_string(), table);
    }

    pub fn get(&self, name: &str) -> Option<&EmbeddingTable> {
        self.tables.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Concatenated per-slot embeddings: left block, then center, then right,
/// each block slot-major. Length is always `(ℓ+c+r)·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Map every slot of `window` to its embedding (zero for PAD and OOV) and
/// concatenate the blocks.
pub fn embed_window(window: &ContextWindow, table: &EmbeddingTable) -> FeatureVector {
    let d = table.dim();
    let mut values = Vec::with_capacity(window.len() * d);
    for slot in window.slots() {
        match slot.as_word().and_then(|w| table.vector(w)) {
            Some(v) => values.extend_from_slice(v),
            None => values.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    FeatureVector { values }
}

/// Embed the window as a token sequence rather than a flat vector:
/// one `d`-dim row per slot in left|center|right order.
pub fn embed_sequence(window: &ContextWindow, table: &EmbeddingTable) -> Vec<Vec<f64>> {
    let d = table.dim();
    window
        .slots()
        .map(|slot| match slot.as_word().and_then(|w| table.vector(w)) {
            Some(v) => v.to_vec(),
            None => vec![0.0; d],
        })
        .collect()
}
