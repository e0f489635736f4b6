//! Confusion matrices, macro-averaged metrics, confidence analytics and
//! the four-cell experiment grid.

mod experiment;

pub use experiment::{
    render_table, run_experiment, sha256_hex, Approach, ExperimentCell, ExperimentConfig, ExperimentReport, SplitSizes,
    MODEL_NAME,
};

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::agreement::{disagreement_level, DisagreementLevel};
use crate::corpus::{Corpus, StanceLabel};
use crate::error::{Error, Result};
use crate::model::{Prediction, NUM_CLASSES};
use crate::perspectives::{majority_labels, TiePolicy, TieReport};

/// Rows are gold labels, columns predictions, both in class order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn add(&mut self, gold: StanceLabel, predicted: StanceLabel) -> Result<()> {
        let g = gold.class_index().ok_or(Error::NotAClass(gold))?;
        let p = predicted.class_index().ok_or(Error::NotAClass(predicted))?;
        self.counts[g][p] += 1;
        Ok(())
    }
}

pub fn confusion(preds: &[Prediction], gold: &HashMap<String, StanceLabel>) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for pred in preds {
        let label = gold
            .get(&pred.doc_id)
            .ok_or_else(|| Error::MissingGold(pred.doc_id.clone()))?;
        cm.add(*label, pred.label)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: StanceLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold documents of this class.
    pub support: u64,
    /// Documents predicted as this class.
    pub predicted: u64,
}

/// Metrics in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Accuracy plus macro precision, recall and F1 over all four classes.
///
/// Undefined ratios (no gold or no predicted documents for a class) count
/// as 0 and still enter the macro mean; per-class support and prediction
/// counts show where that happened. Macro F1 is the mean of per-class F1.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no entries"));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<ClassMetrics> = (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let support: u64 = cm.counts[c].iter().sum();
            let predicted: u64 = (0..NUM_CLASSES).map(|g| cm.counts[g][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: StanceLabel::from_class_index(c),
                precision: precision * 100.0,
                recall: recall * 100.0,
                f1: f1 * 100.0,
                support,
                predicted,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    Ok(Metrics {
        accuracy: ratio(cm.trace(), total) * 100.0,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    })
}

pub fn average_confidence(preds: &[Prediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    Ok(preds.iter().map(|p| p.confidence).sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBreakdown {
    pub level: DisagreementLevel,
    pub n_docs: usize,
    /// Percentage points; `None` when no test document has this level.
    pub accuracy: Option<f64>,
    pub avg_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub avg_confidence: f64,
    pub n_docs: usize,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub by_disagreement: Vec<LevelBreakdown>,
}

/// Majority-vote gold labels for evaluation; documents whose tie was
/// discarded have no gold label and appear in the returned report.
pub fn gold_labels(corpus: &Corpus, policy: &TiePolicy) -> Result<(BTreeMap<String, StanceLabel>, TieReport)> {
    let (labels, report) = majority_labels(corpus, policy)?;
    let gold = corpus
        .documents
        .iter()
        .zip(labels)
        .filter_map(|(doc, label)| label.map(|l| (doc.doc_id.clone(), l)))
        .collect();
    Ok((gold, report))
}

pub fn disagreement_levels(corpus: &Corpus) -> Result<HashMap<String, DisagreementLevel>> {
    corpus
        .documents
        .iter()
        .map(|doc| Ok((doc.doc_id.clone(), disagreement_level(&doc.labels())?)))
        .collect()
}

/// Scores predictions against gold labels. Every prediction needs a gold
/// label and every gold document needs a prediction. `levels` drives the
/// per-disagreement breakdown; documents absent from it are left out of
/// the breakdown only.
pub fn evaluate(
    preds: &[Prediction],
    gold: &BTreeMap<String, StanceLabel>,
    levels: &HashMap<String, DisagreementLevel>,
) -> Result<EvalResult> {
    let predicted: HashSet<&str> = preds.iter().map(|p| p.doc_id.as_str()).collect();
    if let Some(missing) = gold.keys().find(|id| !predicted.contains(id.as_str())) {
        return Err(Error::MissingPrediction(missing.clone()));
    }
    let gold_map: HashMap<String, StanceLabel> = gold.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let cm = confusion(preds, &gold_map)?;
    let m = metrics(&cm)?;

    let by_disagreement = DisagreementLevel::ALL
        .iter()
        .map(|&level| {
            let members: Vec<&Prediction> = preds.iter().filter(|p| levels.get(&p.doc_id) == Some(&level)).collect();
            let n = members.len();
            let correct = members.iter().filter(|p| gold_map[&p.doc_id] == p.label).count();
            LevelBreakdown {
                level,
                n_docs: n,
                accuracy: (n > 0).then(|| correct as f64 / n as f64 * 100.0),
                avg_confidence: (n > 0).then(|| members.iter().map(|p| p.confidence).sum::<f64>() / n as f64),
            }
        })
        .collect();

    Ok(EvalResult {
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        avg_confidence: average_confidence(preds)?,
        n_docs: preds.len(),
        per_class: m.per_class,
        confusion: cm,
        by_disagreement,
    })
}
