//! Scoring: confusion matrices, per-class precision/recall/F1, micro and
//! macro F1, and surface-grouped error analysis.
//!
//! In this single-label exhaustive setting micro-F1 equals accuracy
//! (trace / total); both are computed from the same pooled counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceKey, InstanceRecord, Label};
use crate::model::PredictionSet;

/// 3×3 counts, rows = gold, columns = predicted, [`Label::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn zero() -> Self {
        ConfusionMatrix {
            counts: [[0; 3]; 3],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|k| self.counts[k][k]).sum()
    }

    pub fn gold_total(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn predicted_total(&self, k: usize) -> u64 {
        (0..3).map(|g| self.counts[g][k]).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for gold instance {0}")]
    MissingPrediction(InstanceKey),
    #[error("prediction for unknown instance {0}")]
    UnknownInstance(InstanceKey),
    #[error("gold instance {0} has no label")]
    UnlabeledGold(InstanceKey),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

/// Count (gold, predicted) pairs. The prediction set must cover every gold
/// key and introduce none of its own.
pub fn confusion(
    gold: &BTreeMap<InstanceKey, Label>,
    pred: &PredictionSet,
) -> Result<ConfusionMatrix, EvalError> {
    for key in pred.keys() {
        if !gold.contains_key(key) {
            return Err(EvalError::UnknownInstance(key.clone()));
        }
    }
    let mut cm = ConfusionMatrix::zero();
    for (key, gold_label) in gold {
        let p = pred
            .get(key)
            .ok_or_else(|| EvalError::MissingPrediction(key.clone()))?;
        cm.counts[gold_label.index()][p.label.index()] += 1;
    }
    Ok(cm)
}

/// Gold labels of an instance dump, keyed for scoring.
pub fn gold_labels(records: &[InstanceRecord]) -> Result<BTreeMap<InstanceKey, Label>, EvalError> {
    let mut map = BTreeMap::new();
    for r in records {
        let key = InstanceKey::new(r.doc_id.clone(), r.instance_id.clone());
        let label = r.label.ok_or_else(|| EvalError::UnlabeledGold(key.clone()))?;
        map.insert(key, label);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: [ClassMetrics; 3],
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    // zero-denominator precision/recall are 0 by convention
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 plus micro-F1 (= trace/total) and macro-F1
/// (unweighted mean of the class F1s).
pub fn scores(cm: &ConfusionMatrix) -> Result<EvalReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class: [ClassMetrics; 3] = std::array::from_fn(|k| {
        let tp = cm.counts[k][k];
        let precision = ratio(tp, cm.predicted_total(k));
        let recall = ratio(tp, cm.gold_total(k));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    });
    let micro_f1 = cm.trace() as f64 / total as f64;
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / 3.0;
    Ok(EvalReport {
        confusion: *cm,
        per_class,
        micro_f1,
        macro_f1,
        total,
    })
}

/// Misclassified instances sharing one surface string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGroup {
    pub surface: String,
    pub count: usize,
    pub instances: Vec<InstanceKey>,
}

/// All errors of one (gold, predicted) class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGroup {
    pub gold: Label,
    pub predicted: Label,
    pub total: usize,
    /// surface groups, most frequent first
    pub surfaces: Vec<SurfaceGroup>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub groups: Vec<ErrorGroup>,
}

/// Group misclassifications by (gold, predicted) pair and, within each
/// pair, by identical surface string, most frequent surfaces first. Repeated
/// phrases like a corpus's many `analysis` instances surface at the top.
pub fn error_analysis(
    gold_records: &[InstanceRecord],
    pred: &PredictionSet,
) -> Result<ErrorReport, EvalError> {
    let gold = gold_labels(gold_records)?;
    for key in pred.keys() {
        if !gold.contains_key(key) {
            return Err(EvalError::UnknownInstance(key.clone()));
        }
    }
    // (gold, pred) -> surface -> keys
    let mut pairs: BTreeMap<(Label, Label), BTreeMap<String, Vec<InstanceKey>>> = BTreeMap::new();
    for r in gold_records {
        let key = InstanceKey::new(r.doc_id.clone(), r.instance_id.clone());
        let gold_label = gold[&key];
        let p = pred
            .get(&key)
            .ok_or_else(|| EvalError::MissingPrediction(key.clone()))?;
        if p.label != gold_label {
            pairs
                .entry((gold_label, p.label))
                .or_default()
                .entry(r.surface.clone())
                .or_default()
                .push(key);
        }
    }
    let mut groups = Vec::new();
    for ((gold_label, pred_label), by_surface) in pairs {
        let mut surfaces: Vec<SurfaceGroup> = by_surface
            .into_iter()
            .map(|(surface, instances)| SurfaceGroup {
                surface,
                count: instances.len(),
                instances,
            })
            .collect();
        surfaces.sort_by(|a, b| b.count.cmp(&a.count).then(a.surface.cmp(&b.surface)));
        groups.push(ErrorGroup {
            gold: gold_label,
            predicted: pred_label,
            total: surfaces.iter().map(|s| s.count).sum(),
            surfaces,
        });
    }
    groups.sort_by(|a, b| b.total.cmp(&a.total).then(a.gold.cmp(&b.gold)));
    Ok(ErrorReport { groups })
}

/// Plain-text rendering: the confusion table, per-class metrics and the
/// pooled scores, aligned for terminals.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("                 Prediction\n");
    out.push_str("Gold           Material   Process      Task\n");
    for g in 0..3 {
        let name = Label::ALL[g].as_str();
        out.push_str(&format!(
            "{name:<12} {:>10} {:>9} {:>9}\n",
            report.confusion.counts[g][0], report.confusion.counts[g][1], report.confusion.counts[g][2]
        ));
    }
    out.push('\n');
    out.push_str("Class         Precision    Recall        F1\n");
    for (k, m) in report.per_class.iter().enumerate() {
        out.push_str(&format!(
            "{:<12} {:>10.4} {:>9.4} {:>9.4}\n",
            Label::ALL[k].as_str(),
            m.precision,
            m.recall,
            m.f1
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "micro-F1 {:.4}   macro-F1 {:.4}   instances {}\n",
        report.micro_f1, report.macro_f1, report.total
    ));
    out
}
