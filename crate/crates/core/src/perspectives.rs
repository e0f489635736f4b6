//! Training-set construction: one majority-vote instance per document, or
//! one instance per annotation.

use serde::{Deserialize, Serialize};

use crate::corpus::{label_counts, Corpus, StanceLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    MajorityVote,
    /// Index of the annotation within the document's annotation list.
    Annotation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainInstance {
    pub doc_id: String,
    pub query_text: String,
    pub content: String,
    pub label: StanceLabel,
    pub origin: Origin,
}

/// What to do when several labels share the top vote count.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Discard,
    /// Highest-precedence label first.
    FixedPrecedence([StanceLabel; 4]),
    Error,
}

impl TiePolicy {
    /// A precedence policy; `order` must be a permutation of the four classes.
    pub fn precedence(order: [StanceLabel; 4]) -> Result<Self> {
        let policy = TiePolicy::FixedPrecedence(order);
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if let TiePolicy::FixedPrecedence(order) = self {
            let mut sorted = *order;
            sorted.sort();
            if sorted != StanceLabel::CLASSES {
                return Err(Error::Config(format!(
                    "tie precedence must order each of pro, neutral, against, not-about exactly once, got {order:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MajorityOutcome {
    Label(StanceLabel),
    /// Labels sharing the top count, in class order.
    Tie(Vec<StanceLabel>),
}

impl MajorityOutcome {
    pub fn label(&self) -> Option<StanceLabel> {
        match self {
            MajorityOutcome::Label(l) => Some(*l),
            MajorityOutcome::Tie(_) => None,
        }
    }
}

/// Majority vote over one document's annotations.
///
/// A unique top label wins outright. On a tie, `Discard` reports the tie,
/// `FixedPrecedence` picks the highest-ranked tied label and `Error` fails.
pub fn majority_label(labels: &[StanceLabel], policy: &TiePolicy) -> Result<MajorityOutcome> {
    if labels.is_empty() {
        return Err(Error::NoAnnotations);
    }
    if labels.contains(&StanceLabel::LinkNotWorking) {
        return Err(Error::NotAClass(StanceLabel::LinkNotWorking));
    }
    let counts = label_counts(labels);
    let max = counts.iter().copied().max().unwrap_or(0);
    let tied: Vec<StanceLabel> = StanceLabel::CLASSES
        .into_iter()
        .filter(|l| counts[l.index()] == max)
        .collect();
    if let [only] = tied.as_slice() {
        return Ok(MajorityOutcome::Label(*only));
    }
    match policy {
        TiePolicy::Discard => Ok(MajorityOutcome::Tie(tied)),
        TiePolicy::FixedPrecedence(order) => {
            policy.validate()?;
            let winner = order
                .iter()
                .find(|l| tied.contains(l))
                .copied()
                .expect("precedence covers every class");
            Ok(MajorityOutcome::Label(winner))
        }
        TiePolicy::Error => Err(Error::MajorityTie { doc_id: None, tied }),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieReport {
    pub discarded: Vec<String>,
    /// Documents whose tie was broken by precedence, with the chosen label.
    pub coerced: Vec<(String, StanceLabel)>,
}

impl TieReport {
    pub fn is_empty(&self) -> bool {
        self.discarded.is_empty() && self.coerced.is_empty()
    }
}

/// Majority labels for every document, `None` where the tie was discarded.
pub fn majority_labels(corpus: &Corpus, policy: &TiePolicy) -> Result<(Vec<Option<StanceLabel>>, TieReport)> {
    policy.validate()?;
    let mut report = TieReport::default();
    let mut out = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let labels = doc.labels();
        let outcome = majority_label(&labels, policy).map_err(|e| match e {
            Error::MajorityTie { tied, .. } => Error::MajorityTie {
                doc_id: Some(doc.doc_id.clone()),
                tied,
            },
            other => other,
        })?;
        match outcome {
            MajorityOutcome::Label(label) => {
                if matches!(policy, TiePolicy::FixedPrecedence(_)) && doc.plurality_label() != Some(label) {
                    report.coerced.push((doc.doc_id.clone(), label));
                }
                out.push(Some(label));
            }
            MajorityOutcome::Tie(_) => {
                report.discarded.push(doc.doc_id.clone());
                out.push(None);
            }
        }
    }
    Ok((out, report))
}

/// One majority-labelled instance per document that has a majority.
pub fn build_baseline_dataset(corpus: &Corpus, policy: &TiePolicy) -> Result<(Vec<TrainInstance>, TieReport)> {
    let (labels, report) = majority_labels(corpus, policy)?;
    let instances = corpus
        .documents
        .iter()
        .zip(labels)
        .filter_map(|(doc, label)| {
            label.map(|label| TrainInstance {
                doc_id: doc.doc_id.clone(),
                query_text: doc.query_text.clone(),
                content: doc.content.clone(),
                label,
                origin: Origin::MajorityVote,
            })
        })
        .collect();
    Ok((instances, report))
}

/// One instance per annotation, in document then annotation order. With
/// `distinct_only`, a document contributes each distinct label once (at the
/// index of its first occurrence). `link-not-working` annotations are
/// skipped; preprocessed corpora contain none.
pub fn disaggregate(corpus: &Corpus, distinct_only: bool) -> Vec<TrainInstance> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let mut emitted: Vec<StanceLabel> = Vec::new();
        for (j, ann) in doc.annotations.iter().enumerate() {
            if ann.label == StanceLabel::LinkNotWorking {
                continue;
            }
            if distinct_only {
                if emitted.contains(&ann.label) {
                    continue;
                }
                emitted.push(ann.label);
            }
            out.push(TrainInstance {
                doc_id: doc.doc_id.clone(),
                query_text: doc.query_text.clone(),
                content: doc.content.clone(),
                label: ann.label,
                origin: Origin::Annotation(j),
            });
        }
    }
    out
}
