mod common;

use stance_core::agreement::{disagreement_level, DisagreementLevel};
use stance_core::chunker::ChunkingConfig;
use stance_core::corpus::{split, Corpus, StanceLabel};
use stance_core::evaluation::{run_experiment, ExperimentConfig};
use stance_core::model::{TrainConfig, TrainMode};

fn config() -> ExperimentConfig {
    ExperimentConfig {
        chunking: ChunkingConfig {
            max_tokens: 48,
            ..ChunkingConfig::default()
        },
        train: TrainConfig {
            epochs: 10,
            learning_rate: 0.5,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn separable_corpus_is_learned_by_every_cell() {
    let corpus = common::planted_corpus(240, 0.0, 11);
    let report = run_experiment(&corpus, &config()).unwrap();
    assert_eq!(report.cells.len(), 4);
    for cell in &report.cells {
        assert!(
            cell.result.f1 >= 95.0,
            "{:?} chunking={}: {}",
            cell.approach,
            cell.chunking,
            cell.result.f1
        );
        assert_eq!(cell.test_fingerprint, report.test_fingerprint);
        assert_eq!(cell.result.n_docs, report.cells[0].result.n_docs);
    }
}

#[test]
fn split_documents_never_reach_the_test_set() {
    let mut corpus = common::planted_corpus(120, 0.3, 12);
    // Give every fifth document three different labels.
    for doc in corpus.documents.iter_mut().step_by(5) {
        for (a, label) in doc
            .annotations
            .iter_mut()
            .zip([StanceLabel::Pro, StanceLabel::Neutral, StanceLabel::Against])
        {
            a.label = label;
        }
    }
    let corpus = Corpus::new(corpus.documents, "with splits").unwrap();
    let cfg = ExperimentConfig {
        train: TrainConfig {
            mode: TrainMode::FullBatch,
            ..config().train
        },
        ..config()
    };
    let report = run_experiment(&corpus, &cfg).unwrap();
    let test = split(&corpus, &cfg.split).unwrap().test;
    let split_ids: Vec<&str> = test
        .documents
        .iter()
        .filter(|d| disagreement_level(&d.labels()).unwrap() == DisagreementLevel::Split)
        .map(|d| d.doc_id.as_str())
        .collect();
    assert!(!split_ids.is_empty());
    assert_eq!(report.test_ties.discarded.len(), split_ids.len());
    for cell in &report.cells {
        assert_eq!(cell.result.n_docs + split_ids.len(), test.len());
        assert!(cell.predictions.iter().all(|p| !split_ids.contains(&p.doc_id.as_str())));
        let split_level = cell
            .result
            .by_disagreement
            .iter()
            .find(|b| b.level == DisagreementLevel::Split)
            .unwrap();
        assert_eq!(split_level.n_docs, 0);
    }
}
