//! Inter-annotator agreement statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{label_counts, Corpus, StanceLabel};
use crate::error::{Error, Result};

/// How much the annotators of a single document disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementLevel {
    /// Every annotation carries the same label.
    Unanimous,
    /// Some label repeats but not all annotations agree.
    Majority,
    /// No label occurs more than once.
    Split,
}

impl DisagreementLevel {
    pub const ALL: [DisagreementLevel; 3] = [
        DisagreementLevel::Unanimous,
        DisagreementLevel::Majority,
        DisagreementLevel::Split,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisagreementLevel::Unanimous => "unanimous",
            DisagreementLevel::Majority => "majority",
            DisagreementLevel::Split => "split",
        }
    }
}

pub fn disagreement_level(labels: &[StanceLabel]) -> Result<DisagreementLevel> {
    if labels.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let counts = label_counts(labels);
    let distinct = counts.iter().filter(|&&c| c > 0).count();
    let max = counts.iter().copied().max().unwrap_or(0);
    Ok(if distinct == 1 {
        DisagreementLevel::Unanimous
    } else if max == 1 {
        DisagreementLevel::Split
    } else {
        DisagreementLevel::Majority
    })
}

fn check_items(items: &[Vec<usize>], n_raters: usize) -> Result<usize> {
    if items.is_empty() {
        return Err(Error::Agreement("at least one item is required".into()));
    }
    if n_raters < 2 {
        return Err(Error::Agreement(format!("need at least 2 raters, got {n_raters}")));
    }
    let k = items[0].len();
    for (i, row) in items.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Agreement(format!(
                "item {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let total: usize = row.iter().sum();
        if total != n_raters {
            return Err(Error::Agreement(format!(
                "item {i} has {total} ratings, expected {n_raters}"
            )));
        }
    }
    Ok(k)
}

/// Fraction of agreeing rater pairs for one item.
fn item_agreement(row: &[usize], n_raters: usize) -> f64 {
    let n = n_raters as f64;
    let agreeing: f64 = row.iter().map(|&c| (c * c.saturating_sub(1)) as f64).sum();
    agreeing / (n * (n - 1.0))
}

/// Mean share of agreeing rater pairs per item, without chance correction.
///
/// `items[i][j]` counts the raters who put item `i` in category `j`.
pub fn pairwise_agreement(items: &[Vec<usize>], n_raters: usize) -> Result<f64> {
    check_items(items, n_raters)?;
    let total: f64 = items.iter().map(|row| item_agreement(row, n_raters)).sum();
    Ok(total / items.len() as f64)
}

/// Fleiss' kappa for a fixed number of raters per item.
///
/// When every rating falls in one category the expected agreement is 1 and
/// the ratio is undefined; that case returns 1.0 (agreement is perfect).
pub fn fleiss_kappa(items: &[Vec<usize>], n_raters: usize) -> Result<f64> {
    let k = check_items(items, n_raters)?;
    let observed = pairwise_agreement(items, n_raters)?;
    let total_ratings = (items.len() * n_raters) as f64;
    let expected: f64 = (0..k)
        .map(|j| {
            let p = items.iter().map(|row| row[j]).sum::<usize>() as f64 / total_ratings;
            p * p
        })
        .sum();
    if expected >= 1.0 - f64::EPSILON {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub fleiss_kappa: f64,
    /// Mean pairwise percent agreement, see `notes`.
    pub pairwise_agreement: f64,
    pub per_label_counts: BTreeMap<String, usize>,
    pub n_items: usize,
    pub n_raters: usize,
    pub disagreement_histogram: BTreeMap<String, usize>,
    pub notes: String,
}

pub const PAIRWISE_AGREEMENT_NOTE: &str = "pairwise_agreement is the mean fraction of agreeing \
annotator pairs per document (uncorrected observed agreement, the P-bar term of Fleiss' kappa)";

/// Agreement statistics for a corpus whose documents all carry the same
/// number of annotations.
pub fn agreement_report(corpus: &Corpus) -> Result<AgreementReport> {
    let first = corpus
        .documents
        .first()
        .ok_or(Error::Empty("agreement needs at least one document"))?;
    let n_raters = first.annotations.len();
    let mut items = Vec::with_capacity(corpus.len());
    let mut histogram: BTreeMap<String, usize> = DisagreementLevel::ALL
        .iter()
        .map(|l| (l.as_str().to_string(), 0))
        .collect();
    let mut totals = [0usize; 5];
    for doc in &corpus.documents {
        if doc.annotations.len() != n_raters {
            return Err(Error::Agreement(format!(
                "document {:?} has {} annotations, others have {n_raters}",
                doc.doc_id,
                doc.annotations.len()
            )));
        }
        let labels = doc.labels();
        let counts = label_counts(&labels);
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
        *histogram
            .get_mut(disagreement_level(&labels)?.as_str())
            .expect("all levels present") += 1;
        items.push(counts.to_vec());
    }
    Ok(AgreementReport {
        fleiss_kappa: fleiss_kappa(&items, n_raters)?,
        pairwise_agreement: pairwise_agreement(&items, n_raters)?,
        per_label_counts: StanceLabel::ALL
            .iter()
            .map(|l| (l.as_str().to_string(), totals[l.index()]))
            .collect(),
        n_items: items.len(),
        n_raters,
        disagreement_histogram: histogram,
        notes: PAIRWISE_AGREEMENT_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use StanceLabel::*;

    #[test]
    fn unanimous_items_in_different_categories() {
        let items = vec![vec![3, 0, 0, 0], vec![0, 3, 0, 0]];
        assert_eq!(fleiss_kappa(&items, 3).unwrap(), 1.0);
        assert_eq!(pairwise_agreement(&items, 3).unwrap(), 1.0);
    }

    #[test]
    fn two_one_split_items() {
        let items = vec![vec![2, 1, 0, 0]; 3];
        let kappa = fleiss_kappa(&items, 3).unwrap();
        assert!((kappa - (-0.5)).abs() < 1e-12, "{kappa}");
        let p = pairwise_agreement(&items, 3).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_distinct_has_no_agreement() {
        assert_eq!(pairwise_agreement(&[vec![1, 1, 1, 0]], 3).unwrap(), 0.0);
    }

    #[test]
    fn single_category_is_perfect() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![3, 0]], 3).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fleiss_kappa(&[], 3).is_err());
        assert!(fleiss_kappa(&[vec![2, 0]], 3).is_err());
        assert!(fleiss_kappa(&[vec![1, 0]], 1).is_err());
        assert!(fleiss_kappa(&[vec![3, 0], vec![3]], 3).is_err());
    }

    #[test]
    fn levels() {
        assert_eq!(
            disagreement_level(&[Pro, Pro, Pro]).unwrap(),
            DisagreementLevel::Unanimous
        );
        assert_eq!(
            disagreement_level(&[Pro, Pro, Against]).unwrap(),
            DisagreementLevel::Majority
        );
        assert_eq!(
            disagreement_level(&[Pro, Neutral, Against]).unwrap(),
            DisagreementLevel::Split
        );
        assert_eq!(disagreement_level(&[Pro]).unwrap(), DisagreementLevel::Unanimous);
        assert_eq!(
            disagreement_level(&[Pro, Pro, Neutral, Neutral]).unwrap(),
            DisagreementLevel::Majority
        );
        assert!(disagreement_level(&[]).is_err());
    }

    #[test]
    fn levels_partition_three_annotations() {
        let labels = StanceLabel::CLASSES;
        let mut seen = BTreeMap::new();
        for a in labels {
            for b in labels {
                for c in labels {
                    let level = disagreement_level(&[a, b, c]).unwrap();
                    let distinct = [a, b, c].iter().collect::<std::collections::HashSet<_>>().len();
                    let expected = match distinct {
                        1 => DisagreementLevel::Unanimous,
                        2 => DisagreementLevel::Majority,
                        _ => DisagreementLevel::Split,
                    };
                    assert_eq!(level, expected);
                    *seen.entry(level).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(seen.values().sum::<usize>(), 64);
        assert_eq!(seen[&DisagreementLevel::Unanimous], 4);
        assert_eq!(seen[&DisagreementLevel::Split], 24);
    }
}
