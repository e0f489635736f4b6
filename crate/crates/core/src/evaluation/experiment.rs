use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{disagreement_levels, evaluate, gold_labels, EvalResult};
use crate::chunker::{chunk_document, ChunkingConfig};
use crate::corpus::{split, write_jsonl, Corpus, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{
    expand_to_chunks, fit_feature_space, predict_document, train, FeatureSpace, LinearModel, Prediction, TrainConfig,
};
use crate::perspectives::{build_baseline_dataset, disaggregate, TiePolicy, TieReport, TrainInstance};

pub const MODEL_NAME: &str = "tfidf-logreg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Baseline,
    MultiPerspective,
}

impl Approach {
    pub fn display_name(self) -> &'static str {
        match self {
            Approach::Baseline => "Baseline",
            Approach::MultiPerspective => "Multi-Perspective",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub split: SplitSpec,
    pub tie_policy: TiePolicy,
    /// Settings for the chunked cells; the unchunked cells truncate to the
    /// same `max_tokens`.
    pub chunking: ChunkingConfig,
    pub train: TrainConfig,
    pub distinct_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            split: SplitSpec::default(),
            tie_policy: TiePolicy::Discard,
            chunking: ChunkingConfig::default(),
            train: TrainConfig::default(),
            distinct_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub approach: Approach,
    pub model: String,
    pub chunking: bool,
    pub result: EvalResult,
    /// Document-level training instances before chunk expansion.
    pub train_instances: usize,
    pub train_examples: usize,
    pub val_instances: usize,
    /// Mean negative log-likelihood of the cell's own validation labels.
    pub val_loss: Option<f64>,
    pub test_fingerprint: String,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_fingerprint: String,
    pub corpus_fingerprint: String,
    pub test_fingerprint: String,
    pub split_sizes: SplitSizes,
    /// Test documents left without a gold label by the tie policy.
    pub test_ties: TieReport,
    pub train_ties: TieReport,
    pub cells: Vec<ExperimentCell>,
}

impl ExperimentReport {
    pub fn cell(&self, approach: Approach, chunking: bool) -> Option<&ExperimentCell> {
        self.cells
            .iter()
            .find(|c| c.approach == approach && c.chunking == chunking)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn corpus_fingerprint(corpus: &Corpus) -> Result<String> {
    let mut buf = Vec::new();
    write_jsonl(corpus, &mut buf)?;
    Ok(sha256_hex(&buf))
}

/// Runs the Baseline / Multi-Perspective × chunked / truncated grid.
///
/// The corpus is split once. Both approaches train on the training split
/// (majority labels vs. one instance per annotation) and are scored on the
/// same majority-labelled test documents. Per chunking setting, one
/// feature space is fitted on the chunk texts of the training documents
/// and shared by both approaches.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.tie_policy.validate()?;
    config.chunking.validate()?;
    config.train.validate()?;

    let splits = split(corpus, &config.split)?;
    let (gold, test_ties) = gold_labels(&splits.test, &config.tie_policy)?;
    if gold.is_empty() {
        return Err(Error::Empty("test split has no majority-labelled documents"));
    }
    let levels = disagreement_levels(&splits.test)?;
    let test_fingerprint = {
        let lines: String = gold.iter().map(|(id, label)| format!("{id}\t{label}\n")).collect();
        sha256_hex(lines.as_bytes())
    };

    let (baseline_train, train_ties) = build_baseline_dataset(&splits.train, &config.tie_policy)?;
    let (baseline_val, _) = build_baseline_dataset(&splits.val, &config.tie_policy)?;
    let multi_train = disaggregate(&splits.train, config.distinct_only);
    let multi_val = disaggregate(&splits.val, config.distinct_only);
    let datasets = [
        (Approach::Baseline, &baseline_train, &baseline_val),
        (Approach::MultiPerspective, &multi_train, &multi_val),
    ];

    let settings = [
        (false, ChunkingConfig::disabled(config.chunking.max_tokens)),
        (
            true,
            ChunkingConfig {
                enabled: true,
                ..config.chunking.clone()
            },
        ),
    ];

    let test_docs: Vec<_> = splits
        .test
        .documents
        .iter()
        .filter(|d| gold.contains_key(&d.doc_id))
        .collect();

    let spaces = settings
        .iter()
        .map(|(_, chunking)| training_space(&splits.train, chunking))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(4);
    for (approach, train_set, val_set) in datasets {
        for ((chunked, chunking), space) in settings.iter().zip(&spaces) {
            let examples = expand_to_chunks(train_set, chunking)?;
            let model = train(&examples, space, &config.train)?;
            let predictions = test_docs
                .iter()
                .map(|d| predict_document(&model, space, &d.doc_id, &d.content, chunking))
                .collect::<Result<Vec<_>>>()?;
            let result = evaluate(&predictions, &gold, &levels)?;
            cells.push(ExperimentCell {
                approach,
                model: MODEL_NAME.to_string(),
                chunking: *chunked,
                result,
                train_instances: train_set.len(),
                train_examples: examples.len(),
                val_instances: val_set.len(),
                val_loss: validation_loss(&model, space, val_set, chunking)?,
                test_fingerprint: test_fingerprint.clone(),
                predictions,
            });
        }
    }

    Ok(ExperimentReport {
        config: config.clone(),
        config_fingerprint: sha256_hex(serde_json::to_string(config)?.as_bytes()),
        corpus_fingerprint: corpus_fingerprint(corpus)?,
        test_fingerprint,
        split_sizes: SplitSizes {
            train: splits.train.len(),
            val: splits.val.len(),
            test: splits.test.len(),
        },
        test_ties,
        train_ties,
        cells,
    })
}

fn training_space(train: &Corpus, chunking: &ChunkingConfig) -> Result<FeatureSpace> {
    let mut texts = Vec::new();
    for doc in &train.documents {
        texts.extend(chunk_document(&doc.content, chunking)?.into_iter().map(|c| c.text));
    }
    fit_feature_space(texts.iter().map(String::as_str))
}

fn validation_loss(
    model: &LinearModel,
    space: &FeatureSpace,
    val: &[TrainInstance],
    chunking: &ChunkingConfig,
) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let mut cache: HashMap<&str, Prediction> = HashMap::new();
    let mut total = 0.0;
    for inst in val {
        if !cache.contains_key(inst.doc_id.as_str()) {
            let p = predict_document(model, space, &inst.doc_id, &inst.content, chunking)?;
            cache.insert(&inst.doc_id, p);
        }
        let class = inst.label.class_index().ok_or(Error::NotAClass(inst.label))?;
        total -= cache[inst.doc_id.as_str()].probs[class].max(f64::MIN_POSITIVE).ln();
    }
    Ok(Some(total / val.len() as f64))
}

/// Plain-text rendering: the results grid, then confidence and accuracy
/// per annotator-disagreement level.
pub fn render_table(report: &ExperimentReport) -> String {
    let header = [
        "Approach",
        "Model",
        "Chunking",
        "Acc.",
        "Prec.",
        "Rec.",
        "F1",
        "Avg. Conf.",
    ];
    let rows: Vec<[String; 8]> = report
        .cells
        .iter()
        .map(|c| {
            [
                c.approach.display_name().to_string(),
                c.model.clone(),
                if c.chunking { "yes" } else { "no" }.to_string(),
                format!("{:.2}", c.result.accuracy),
                format!("{:.2}", c.result.precision),
                format!("{:.2}", c.result.recall),
                format!("{:.2}", c.result.f1),
                format!("{:.2}", c.result.avg_confidence),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }

    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(padded.join(" | ").trim_end());
        out.push('\n');
    };
    line(&header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-|-"));
    out.push('\n');
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }

    let _ = writeln!(
        out,
        "\ntest documents: {} (ties discarded: {})",
        report.cells.first().map_or(0, |c| c.result.n_docs),
        report.test_ties.discarded.len()
    );
    let _ = writeln!(out, "confidence / accuracy by annotator agreement:");
    for c in &report.cells {
        let parts: Vec<String> = c
            .result
            .by_disagreement
            .iter()
            .map(|b| match (b.avg_confidence, b.accuracy) {
                (Some(conf), Some(acc)) => format!("{} n={} conf={conf:.3} acc={acc:.2}", b.level.as_str(), b.n_docs),
                _ => format!("{} n=0", b.level.as_str()),
            })
            .collect();
        let _ = writeln!(
            out,
            "  {} / chunking={}: {}",
            c.approach.display_name(),
            if c.chunking { "yes" } else { "no" },
            parts.join("; ")
        );
    }
    out
}
