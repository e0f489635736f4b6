//! Synthetic corpora with known structure, shared by the integration tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use stance_core::corpus::{Annotation, Corpus, Document, StanceLabel};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn doc(id: &str, content: &str, labels: &[StanceLabel]) -> Document {
    Document {
        doc_id: id.to_string(),
        query_id: "q0".to_string(),
        query_text: "should it be allowed".to_string(),
        url: None,
        content: content.to_string(),
        annotations: labels.iter().copied().map(Annotation::new).collect(),
    }
}

/// A sentence of `len` lowercase filler tokens, capitalised and ending in
/// a period, so the segmenter splits exactly at its end.
pub fn filler_sentence(rng: &mut StdRng, len: usize) -> String {
    let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..500))).collect();
    words[0] = format!("S{}", rng.gen_range(0..500));
    words[len - 1].push('.');
    words.join(" ")
}

fn keyword(label: StanceLabel, rng: &mut StdRng) -> String {
    let stem = match label {
        StanceLabel::Pro => "favour",
        StanceLabel::Neutral => "balanced",
        StanceLabel::Against => "oppose",
        StanceLabel::NotAbout => "offtopic",
        StanceLabel::LinkNotWorking => unreachable!(),
    };
    format!("{stem}{}", rng.gen_range(0..6))
}

/// Document text whose sentences each carry `strong` keywords of `label`
/// and, every other sentence, `weak` keywords of `rival`.
fn planted_text(
    rng: &mut StdRng,
    label: StanceLabel,
    rival: Option<StanceLabel>,
    strong: usize,
    weak: usize,
) -> String {
    let n_sentences = rng.gen_range(5..14);
    let mut sentences = Vec::with_capacity(n_sentences);
    for s in 0..n_sentences {
        let len = rng.gen_range(8..20);
        let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..400))).collect();
        for _ in 0..strong {
            let at = rng.gen_range(1..words.len());
            words.insert(at, keyword(label, rng));
        }
        if let Some(rival) = rival {
            if s % 2 == 1 {
                for _ in 0..weak {
                    let at = rng.gen_range(1..words.len());
                    words.insert(at, keyword(rival, rng));
                }
            }
        }
        words[0] = format!("W{}", rng.gen_range(0..400));
        words.last_mut().unwrap().push('.');
        sentences.push(words.join(" "));
    }
    sentences.join(" ")
}

/// Corpus with a keyword-to-label signal. A `boundary_share` of documents
/// mixes in keywords of a rival class and gets exactly one annotator who
/// picked that rival; the rest are unanimous and unambiguous.
pub fn planted_corpus(n: usize, boundary_share: f64, seed: u64) -> Corpus {
    let mut rng = rng(seed);
    let docs = (0..n)
        .map(|i| {
            let label = StanceLabel::CLASSES[i % 4];
            let boundary = rng.gen_bool(boundary_share);
            let (content, labels) = if boundary {
                let rivals: Vec<StanceLabel> = StanceLabel::CLASSES.into_iter().filter(|l| *l != label).collect();
                let rival = *rivals.choose(&mut rng).unwrap();
                let text = planted_text(&mut rng, label, Some(rival), 1, 1);
                let mut labels = vec![label, label, rival];
                labels.shuffle(&mut rng);
                (text, labels)
            } else {
                (planted_text(&mut rng, label, None, 2, 0), vec![label; 3])
            };
            let mut d = doc(&format!("doc{i:04}"), &content, &labels);
            d.query_id = format!("q{}", i % 7);
            d.query_text = format!("query number {}", i % 7);
            d
        })
        .collect();
    Corpus::new(docs, format!("planted corpus n={n} seed={seed}")).unwrap()
}

/// Expected removal counts of [`removal_fixture`].
pub struct RemovalCounts {
    pub too_long: usize,
    pub duplicates: usize,
    pub link_not_working: usize,
    pub remaining: usize,
}

/// 1,273 documents: 54 longer than 8,000 tokens, 53 exact duplicates of
/// earlier clean documents, 54 with a `link-not-working` annotation, and
/// 1,112 clean unique documents. The removal sets are disjoint.
pub fn removal_fixture(seed: u64) -> (Corpus, RemovalCounts) {
    let mut rng = rng(seed);
    let labels = StanceLabel::CLASSES;
    let mut docs = Vec::new();
    let mut clean_texts = Vec::new();
    for i in 0..1112 {
        let len = rng.gen_range(5..40);
        let text = format!("clean document {i} {}", filler_sentence(&mut rng, len));
        clean_texts.push(text.clone());
        let l = labels[i % 4];
        docs.push(doc(&format!("clean{i}"), &text, &[l, l, labels[(i + 1) % 4]]));
    }
    for i in 0..54 {
        let len = 8001 + rng.gen_range(0..500);
        let text = format!("long{i} {}", vec!["t"; len - 1].join(" "));
        docs.push(doc(&format!("long{i}"), &text, &[labels[i % 4]; 3]));
    }
    for i in 0..53 {
        // Duplicate of a clean document, with surrounding whitespace.
        let original = &clean_texts[i * 20];
        docs.push(doc(
            &format!("dup{i}"),
            &format!("  {original}\n"),
            &[labels[(i + 2) % 4]; 3],
        ));
    }
    for i in 0..54 {
        let text = format!("broken link page {i} {}", filler_sentence(&mut rng, 10));
        let position = i % 3;
        let mut ann = vec![labels[i % 4]; 3];
        ann[position] = StanceLabel::LinkNotWorking;
        docs.push(doc(&format!("broken{i}"), &text, &ann));
    }
    docs.shuffle(&mut rng);
    // Every duplicate must come after its original; restore that order.
    let position = |docs: &[Document], id: &str| docs.iter().position(|d| d.doc_id == id).unwrap();
    for i in 0..53 {
        let dup = position(&docs, &format!("dup{i}"));
        let orig = position(&docs, &format!("clean{}", i * 20));
        if dup < orig {
            docs.swap(dup, orig);
        }
    }
    let corpus = Corpus::new(docs, "removal fixture").unwrap();
    (
        corpus,
        RemovalCounts {
            too_long: 54,
            duplicates: 53,
            link_not_working: 54,
            remaining: 1112,
        },
    )
}
