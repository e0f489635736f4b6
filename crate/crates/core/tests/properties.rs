mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use proptest::sample::select;

use stance_core::agreement::{fleiss_kappa, pairwise_agreement};
use stance_core::chunker::{chunk_document, ChunkingConfig};
use stance_core::corpus::{
    largest_remainder, load_corpus, preprocess, read_csv, read_jsonl, save_corpus, split, token_count, write_csv,
    write_jsonl, Annotation, Corpus, Document, Format, LinkPolicy, PreprocessConfig, SplitSpec, StanceLabel,
};
use stance_core::evaluation::{average_confidence, confusion, metrics};
use stance_core::model::{aggregate_chunk_predictions, fit_feature_space, train, ModelFile, Prediction, TrainConfig};
use stance_core::perspectives::{build_baseline_dataset, disaggregate, majority_label, TiePolicy};

fn any_label() -> impl Strategy<Value = StanceLabel> {
    select(StanceLabel::ALL.to_vec())
}

fn class_label() -> impl Strategy<Value = StanceLabel> {
    select(StanceLabel::CLASSES.to_vec())
}

fn annotation(with_ids: bool) -> impl Strategy<Value = Annotation> {
    let id = if with_ids {
        proptest::option::of("[a-z0-9]{1,6}").boxed()
    } else {
        Just(None).boxed()
    };
    (id, any_label()).prop_map(|(annotator_id, label)| Annotation { annotator_id, label })
}

fn document(
    index: usize,
    n_annotations: std::ops::RangeInclusive<usize>,
    with_ids: bool,
) -> impl Strategy<Value = Document> {
    (
        "[a-z0-9]{1,4}",
        "[ -~]{0,20}",
        proptest::option::of("https?://[a-z]{1,8}\\.[a-z]{2,3}/[a-z0-9]{0,6}"),
        "[ -~\n\t\u{e9}\u{4e2d}]{0,80}",
        proptest::collection::vec(annotation(with_ids), n_annotations),
    )
        .prop_map(move |(query_id, query_text, url, content, annotations)| Document {
            doc_id: format!("doc-{index}"),
            query_id,
            query_text,
            url,
            content,
            annotations,
        })
}

fn corpus(
    max_docs: usize,
    n_annotations: std::ops::RangeInclusive<usize>,
    with_ids: bool,
) -> impl Strategy<Value = Corpus> {
    (0..=max_docs).prop_flat_map(move |n| {
        (0..n)
            .map(|i| document(i, n_annotations.clone(), with_ids))
            .collect::<Vec<_>>()
            .prop_map(|docs| Corpus::new(docs, "generated").unwrap())
    })
}

/// Documents drawn from a small pool of texts so duplicates, blanks and
/// over-length documents are common.
fn messy_corpus() -> impl Strategy<Value = Corpus> {
    let texts = vec![
        "",
        "   ",
        "a b",
        "a b ",
        "one two three four five",
        "x",
        "x y z w v u t s r q p o",
    ];
    proptest::collection::vec((select(texts), proptest::collection::vec(any_label(), 3)), 0..40).prop_map(|rows| {
        let docs = rows
            .into_iter()
            .enumerate()
            .map(|(i, (text, labels))| common::doc(&format!("d{i}"), text, &labels))
            .collect();
        Corpus::new(docs, "messy").unwrap()
    })
}

fn labelled_corpus(max_docs: usize) -> impl Strategy<Value = Corpus> {
    proptest::collection::vec(proptest::collection::vec(class_label(), 3), 1..=max_docs).prop_map(|rows| {
        let docs = rows
            .into_iter()
            .enumerate()
            .map(|(i, labels)| common::doc(&format!("d{i}"), &format!("text {i}"), &labels))
            .collect();
        Corpus::new(docs, "labelled").unwrap()
    })
}

fn fractions() -> impl Strategy<Value = (f64, f64, f64)> {
    (1u32..98, 1u32..98).prop_filter_map("three positive parts", |(a, b)| {
        (a + b < 100).then(|| {
            let (train, val) = (a as f64 / 100.0, b as f64 / 100.0);
            (train, val, 1.0 - train - val)
        })
    })
}

fn count_rows() -> impl Strategy<Value = (Vec<Vec<usize>>, usize)> {
    (2usize..=6, 2usize..=5).prop_flat_map(|(raters, cats)| {
        let row = proptest::collection::vec(0..cats, raters).prop_map(move |picks| {
            let mut row = vec![0; cats];
            for p in picks {
                row[p] += 1;
            }
            row
        });
        (proptest::collection::vec(row, 1..=20), Just(raters))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jsonl_round_trip(c in corpus(12, 1..=5, true)) {
        let mut buf = Vec::new();
        write_jsonl(&c, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back.documents, c.documents);
    }

    #[test]
    fn csv_round_trip(c in corpus(12, 3..=3, false)) {
        let mut buf = Vec::new();
        write_csv(&c, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.documents, c.documents);
    }

    #[test]
    fn preprocess_is_idempotent(c in messy_corpus(), max_tokens in 1usize..8, majority_only in any::<bool>()) {
        let config = PreprocessConfig {
            max_tokens,
            drop_link_not_working: if majority_only { LinkPolicy::MajorityOnly } else { LinkPolicy::AnyAnnotation },
            dedupe: true,
        };
        let (once, report) = preprocess(&c, &config).unwrap();
        let (twice, again) = preprocess(&once, &config).unwrap();
        prop_assert_eq!(&twice.documents, &once.documents);
        prop_assert_eq!(again.final_size, report.final_size);
        prop_assert_eq!(
            report.input_size,
            report.final_size + report.too_long_removed + report.empty_content_removed
                + report.duplicates_removed + report.link_not_working_removed
        );
        prop_assert!(once.documents.iter().all(|d| token_count(&d.content) <= max_tokens));
    }

    #[test]
    fn split_is_a_partition(c in labelled_corpus(60), (tr, va, te) in fractions(), seed in any::<u64>(), stratify in any::<bool>()) {
        let spec = SplitSpec { train_frac: tr, val_frac: va, test_frac: te, seed, stratify_by_majority: stratify };
        let s = split(&c, &spec).unwrap();
        let ids = |corpus: &Corpus| corpus.documents.iter().map(|d| d.doc_id.clone()).collect::<Vec<_>>();
        let mut all: Vec<String> = [ids(&s.train), ids(&s.val), ids(&s.test)].concat();
        prop_assert_eq!(all.len(), c.len());
        all.sort();
        let mut expected = ids(&c);
        expected.sort();
        prop_assert_eq!(all, expected);
        prop_assert_eq!(
            vec![s.train.len(), s.val.len(), s.test.len()],
            largest_remainder(c.len(), &[tr, va, te])
        );
        if stratify {
            // Each plurality stratum is spread within one document of its quota.
            let mut strata: BTreeMap<Option<StanceLabel>, usize> = BTreeMap::new();
            for d in &c.documents {
                *strata.entry(d.plurality_label()).or_default() += 1;
            }
            for (part, frac) in [(&s.train, tr), (&s.val, va), (&s.test, te)] {
                for (key, size) in &strata {
                    let got = part.documents.iter().filter(|d| d.plurality_label() == *key).count() as f64;
                    prop_assert!((got - frac * *size as f64).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn token_count_is_additive(a in "[ -~\n\t]{0,60}", b in "[ -~\n\t]{0,60}") {
        prop_assert_eq!(token_count(&format!("{a} {b}")), token_count(&a) + token_count(&b));
    }

    #[test]
    fn majority_ignores_annotation_order(labels in proptest::collection::vec(class_label(), 1..8), rotate in 0usize..8) {
        let policy = TiePolicy::FixedPrecedence(StanceLabel::CLASSES);
        let mut permuted = labels.clone();
        permuted.reverse();
        let r = rotate % permuted.len();
        permuted.rotate_left(r);
        prop_assert_eq!(majority_label(&labels, &policy).unwrap(), majority_label(&permuted, &policy).unwrap());
        prop_assert_eq!(
            majority_label(&labels, &TiePolicy::Discard).unwrap(),
            majority_label(&permuted, &TiePolicy::Discard).unwrap()
        );
    }

    #[test]
    fn three_annotations_resolve_iff_a_label_repeats(labels in proptest::collection::vec(class_label(), 3)) {
        let resolved = majority_label(&labels, &TiePolicy::Discard).unwrap().label().is_some();
        let repeats = labels.iter().any(|l| labels.iter().filter(|m| *m == l).count() >= 2);
        prop_assert_eq!(resolved, repeats);
    }

    #[test]
    fn disaggregation_counts(c in labelled_corpus(30)) {
        let all = disaggregate(&c, false);
        let distinct = disaggregate(&c, true);
        prop_assert_eq!(all.len(), c.documents.iter().map(|d| d.annotations.len()).sum::<usize>());
        prop_assert!(distinct.len() <= all.len());
    }

    #[test]
    fn unanimous_disaggregation_replicates_baseline(labels in proptest::collection::vec(class_label(), 1..30)) {
        let docs = labels
            .iter()
            .enumerate()
            .map(|(i, l)| common::doc(&format!("d{i}"), &format!("text {i}"), &[*l; 3]))
            .collect();
        let c = Corpus::new(docs, "unanimous").unwrap();
        let pairs = |instances: &[stance_core::perspectives::TrainInstance]| {
            let mut v: Vec<(String, StanceLabel)> = instances.iter().map(|i| (i.content.clone(), i.label)).collect();
            v.sort();
            v
        };
        let (baseline, ties) = build_baseline_dataset(&c, &TiePolicy::Discard).unwrap();
        prop_assert!(ties.is_empty());
        let once = pairs(&baseline);
        let mut tripled: Vec<_> = (0..3).flat_map(|_| once.iter().cloned()).collect();
        tripled.sort();
        prop_assert_eq!(pairs(&disaggregate(&c, false)), tripled);
        prop_assert_eq!(pairs(&disaggregate(&c, true)), pairs(&baseline));
    }

    #[test]
    fn kappa_ignores_item_and_category_order((rows, raters) in count_rows(), seed in any::<u64>()) {
        let k = fleiss_kappa(&rows, raters).unwrap();
        let n_cats = rows[0].len();
        let shift = (seed as usize) % n_cats;
        let mut permuted: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| (0..n_cats).map(|c| r[(c + shift) % n_cats]).rev().collect())
            .collect();
        permuted.rotate_left((seed as usize / 7) % rows.len());
        permuted.reverse();
        prop_assert!((fleiss_kappa(&permuted, raters).unwrap() - k).abs() <= 1e-12);
    }

    #[test]
    fn pairwise_agreement_is_one_iff_unanimous((rows, raters) in count_rows()) {
        let p = pairwise_agreement(&rows, raters).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let unanimous = rows.iter().all(|r| r.contains(&raters));
        prop_assert_eq!(p == 1.0, unanimous);
        let used: HashSet<usize> = rows.iter().flat_map(|r| r.iter().enumerate().filter(|(_, n)| **n > 0).map(|(c, _)| c)).collect();
        if used.len() > 1 {
            prop_assert_eq!(fleiss_kappa(&rows, raters).unwrap() == 1.0, unanimous);
        }
    }

    #[test]
    fn confusion_and_confidence_match_direct_counts(
        rows in proptest::collection::vec((class_label(), proptest::array::uniform4(0.0f64..1.0)), 1..60)
    ) {
        let mut gold = std::collections::HashMap::new();
        let preds: Vec<Prediction> = rows
            .iter()
            .enumerate()
            .map(|(i, (label, raw))| {
                let id = format!("d{i}");
                gold.insert(id.clone(), *label);
                let sum: f64 = raw.iter().sum::<f64>() + 1e-3;
                Prediction::from_probs(id, raw.map(|v| (v + 2.5e-4) / sum), None)
            })
            .collect();
        let cm = confusion(&preds, &gold).unwrap();
        prop_assert_eq!(cm.total() as usize, preds.len());
        let correct = preds.iter().filter(|p| gold[&p.doc_id] == p.label).count();
        let m = metrics(&cm).unwrap();
        prop_assert_eq!(m.accuracy, correct as f64 / preds.len() as f64 * 100.0);
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        let conf = average_confidence(&preds).unwrap();
        let direct = preds.iter().map(|p| p.probs.iter().copied().fold(0.0, f64::max)).sum::<f64>() / preds.len() as f64;
        prop_assert!((conf - direct).abs() <= 1e-12);
        prop_assert!((0.25 - 1e-12..=1.0).contains(&conf));
    }

    #[test]
    fn chunking_is_deterministic_and_nonempty(seed in any::<u64>(), max_tokens in 1usize..40, overlap in 0usize..3) {
        let mut rng = common::rng(seed);
        let text: Vec<String> = (0..12).map(|i| common::filler_sentence(&mut rng, 1 + (i * 7 + seed as usize) % 15)).collect();
        let text = text.join(" ");
        let config = ChunkingConfig { max_tokens, overlap_sentences: overlap, enabled: true };
        let a = chunk_document(&text, &config).unwrap();
        prop_assert_eq!(&a, &chunk_document(&text, &config).unwrap());
        for c in &a {
            prop_assert!(c.token_len > 0);
            prop_assert_eq!(c.token_len, token_count(&c.text));
        }
    }

    #[test]
    fn aggregation_of_identical_vectors_is_identity(raw in proptest::array::uniform4(0.0f64..1.0), lens in proptest::collection::vec(1usize..600, 1..8)) {
        let sum: f64 = raw.iter().sum::<f64>() + 1e-6;
        let p = raw.map(|v| v / sum);
        let chunks: Vec<(usize, [f64; 4])> = lens.into_iter().map(|l| (l, p)).collect();
        prop_assert_eq!(aggregate_chunk_predictions(&chunks).unwrap(), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_is_deterministic(seed in any::<u64>()) {
        let corpus = common::planted_corpus(40, 0.3, seed);
        let (instances, _) = build_baseline_dataset(&corpus, &TiePolicy::Discard).unwrap();
        let space = fit_feature_space(corpus.documents.iter().map(|d| d.content.as_str())).unwrap();
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let bytes = || ModelFile::new(&train(&instances, &space, &config).unwrap(), &space, serde_json::Value::Null).to_json().unwrap();
        prop_assert_eq!(bytes(), bytes());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn files_round_trip_in_both_formats(c in corpus(8, 3..=3, false)) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["corpus.jsonl", "corpus.csv"] {
            let path = dir.path().join(name);
            let format = Format::from_path(&path);
            save_corpus(&c, &path, format).unwrap();
            prop_assert_eq!(&load_corpus(&path, format).unwrap().documents, &c.documents);
        }
    }
}
