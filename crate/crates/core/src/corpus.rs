//! Standoff-annotated corpus parsing, dataset assembly and class statistics.
//!
//! A document is a paragraph `.txt` file plus an `.ann` file with
//! tab-separated entity lines of the form
//!
//! ```text
//! T1<TAB>Material 0 5<TAB>brass
//! ```
//!
//! Relation (`R`), equivalence (`*`) and attribute lines are skipped.
//! All character offsets are Unicode code-point offsets into the paragraph
//! text, never byte offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// The three target classes. Serialized names match the corpus strings
/// `"Material"`, `"Process"`, `"Task"` byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Material,
    Process,
    Task,
}

impl Label {
    /// Fixed class order used for vector layouts and tie-breaking: M < P < T.
    pub const ALL: [Label; 3] = [Label::Material, Label::Process, Label::Task];

    pub fn index(self) -> usize {
        match self {
            Label::Material => 0,
            Label::Process => 1,
            Label::Task => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Material => "Material",
            Label::Process => "Process",
            Label::Task => "Task",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "Material" => Some(Label::Material),
            "Process" => Some(Label::Process),
            "Task" => Some(Label::Task),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated keyphrase. `start`/`end` are code-point offsets delimiting
/// the half-open span `[start, end)` in the document text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyphraseInstance {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold_label: Option<Label>,
}

/// A paragraph with its keyphrase annotations, sorted by span start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub instances: Vec<KeyphraseInstance>,
}

/// A named split of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub split_name: String,
    pub documents: Vec<Document>,
}

impl Dataset {
    pub fn instance_count(&self) -> usize {
        self.documents.iter().map(|d| d.instances.len()).sum()
    }

    /// All (document, instance) pairs in deterministic order.
    pub fn instances(&self) -> impl Iterator<Item = (&Document, &KeyphraseInstance)> {
        self.documents
            .iter()
            .flat_map(|d| d.instances.iter().map(move |i| (d, i)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed annotation line: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: span [{start}, {end}) exceeds text length {len}")]
    SpanOutOfRange {
        line: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: surface {found:?} does not match text slice {expected:?}")]
    SurfaceMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("no paired .txt/.ann files for document {0:?}")]
    MissingPair(String),
    #[error("{doc_id}.ann: {source}")]
    InDocument {
        doc_id: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("instance {instance_id:?} in document {doc_id:?} has no gold label")]
    UnlabeledInstance { doc_id: String, instance_id: String },
    #[error("dataset contains no instances")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Collapse runs of whitespace (including newlines) to single spaces.
/// Annotation files historically normalize newlines inside spans this way.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse one `.txt`/`.ann` pair into a [`Document`].
///
/// Entity (`T`) lines become instances; every other line kind is skipped.
/// Errors carry the 1-based `.ann` line number.
pub fn parse_standoff(
    doc_id: &str,
    text_content: &str,
    ann_content: &str,
) -> Result<Document, CorpusError> {
    let chars: Vec<char> = text_content.chars().collect();
    let mut instances = Vec::new();
    let mut seen_ids = BTreeSet::new();

    for (idx, raw) in ann_content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || !line.starts_with('T') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0];
        if !seen_ids.insert(id.to_string()) {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                message: format!("duplicate instance id {id:?}"),
            });
        }
        if fields[1].contains(';') {
            // Multi-fragment offsets (`start end;start end`) have no defined
            // semantics for this task; reject rather than guess.
            return Err(CorpusError::MalformedLine {
                line: line_no,
                message: "discontinuous spans are not supported".into(),
            });
        }
        let mid: Vec<&str> = fields[1].split_whitespace().collect();
        if mid.len() != 3 {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                message: format!("expected `Label start end`, found {:?}", fields[1]),
            });
        }
        let label = Label::parse(mid[0]).ok_or_else(|| CorpusError::MalformedLine {
            line: line_no,
            message: format!("unknown label {:?}", mid[0]),
        })?;
        let start: usize = mid[1].parse().map_err(|_| CorpusError::MalformedLine {
            line: line_no,
            message: format!("non-integer offset {:?}", mid[1]),
        })?;
        let end: usize = mid[2].parse().map_err(|_| CorpusError::MalformedLine {
            line: line_no,
            message: format!("non-integer offset {:?}", mid[2]),
        })?;
        if start >= end {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                message: format!("empty or inverted span [{start}, {end})"),
            });
        }
        if end > chars.len() {
            return Err(CorpusError::SpanOutOfRange {
                line: line_no,
                start,
                end,
                len: chars.len(),
            });
        }
        let slice: String = chars[start..end].iter().collect();
        let surface = fields[2];
        if normalize_ws(&slice) != normalize_ws(surface) {
            return Err(CorpusError::SurfaceMismatch {
                line: line_no,
                expected: slice,
                found: surface.to_string(),
            });
        }
        instances.push(KeyphraseInstance {
            id: id.to_string(),
            start,
            end,
            surface: surface.to_string(),
            gold_label: Some(label),
        });
    }

    instances.sort_by(|a, b| {
        (a.start, a.end, a.id.as_str()).cmp(&(b.start, b.end, b.id.as_str()))
    });
    Ok(Document {
        doc_id: doc_id.to_string(),
        text: text_content.to_string(),
        instances,
    })
}

/// Load every `.txt`/`.ann` pair in `directory` into a dataset ordered by
/// document id. A `.txt` without its `.ann` (or vice versa) is an error;
/// an empty directory yields an empty dataset.
pub fn load_dataset(directory: &Path) -> Result<Dataset, CorpusError> {
    let mut txt = BTreeSet::new();
    let mut ann = BTreeSet::new();
    for entry in fs::read_dir(directory).map_err(|e| io_err(directory, e))? {
        let entry = entry.map_err(|e| io_err(directory, e))?;
        let path = entry.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let stem = stem.to_string_lossy().into_owned();
        match ext.to_string_lossy().as_ref() {
            "txt" => {
                txt.insert(stem);
            }
            "ann" => {
                ann.insert(stem);
            }
            _ => {}
        }
    }
    if let Some(unpaired) = txt.symmetric_difference(&ann).next() {
        return Err(CorpusError::MissingPair(unpaired.clone()));
    }

    let split_name = directory
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| directory.display().to_string());
    let mut documents = Vec::with_capacity(txt.len());
    for stem in &txt {
        let txt_path = directory.join(format!("{stem}.txt"));
        let ann_path = directory.join(format!("{stem}.ann"));
        let text = fs::read_to_string(&txt_path).map_err(|e| io_err(&txt_path, e))?;
        let ann = fs::read_to_string(&ann_path).map_err(|e| io_err(&ann_path, e))?;
        let doc = parse_standoff(stem, &text, &ann).map_err(|e| CorpusError::InDocument {
            doc_id: stem.clone(),
            source: Box::new(e),
        })?;
        documents.push(doc);
    }
    Ok(Dataset {
        split_name,
        documents,
    })
}

/// Fraction of instances per class, computed over instances (not documents).
/// Every instance must carry a gold label.
pub fn class_distribution(dataset: &Dataset) -> Result<BTreeMap<Label, f64>, CorpusError> {
    let mut counts = [0usize; 3];
    for (doc, inst) in dataset.instances() {
        let label = inst
            .gold_label
            .ok_or_else(|| CorpusError::UnlabeledInstance {
                doc_id: doc.doc_id.clone(),
                instance_id: inst.id.clone(),
            })?;
        counts[label.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(Label::ALL
        .iter()
        .map(|&l| (l, counts[l.index()] as f64 / total as f64))
        .collect())
}

/// Absolute per-class instance counts, in [`Label::ALL`] order.
pub fn class_counts(dataset: &Dataset) -> Result<[usize; 3], CorpusError> {
    let mut counts = [0usize; 3];
    for (doc, inst) in dataset.instances() {
        let label = inst
            .gold_label
            .ok_or_else(|| CorpusError::UnlabeledInstance {
                doc_id: doc.doc_id.clone(),
                instance_id: inst.id.clone(),
            })?;
        counts[label.index()] += 1;
    }
    Ok(counts)
}

/// Identifies one keyphrase instance across files and prediction sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub doc_id: String,
    pub instance_id: String,
}

impl InstanceKey {
    pub fn new(doc_id: impl Into<String>, instance_id: impl Into<String>) -> Self {
        InstanceKey {
            doc_id: doc_id.into(),
            instance_id: instance_id.into(),
        }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.doc_id, self.instance_id)
    }
}

/// One line of the JSON-lines instance dump consumed by downstream stages
/// and by the scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub doc_id: String,
    pub instance_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Flatten a dataset into dump records, documents and instances in
/// deterministic order.
pub fn dump_instances(dataset: &Dataset) -> Vec<InstanceRecord> {
    dataset
        .instances()
        .map(|(doc, inst)| InstanceRecord {
            doc_id: doc.doc_id.clone(),
            instance_id: inst.id.clone(),
            start: inst.start,
            end: inst.end,
            surface: inst.surface.clone(),
            label: inst.gold_label,
        })
        .collect()
}

pub fn write_instance_dump<W: Write>(
    records: &[InstanceRecord],
    mut out: W,
) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instance_dump<R: BufRead>(input: R) -> std::io::Result<Vec<InstanceRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
