//! Annotated stance corpora: data model, file formats, preprocessing and
//! seeded splitting.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Stance of a document toward its query, as assigned by one annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StanceLabel {
    Pro,
    Neutral,
    Against,
    NotAbout,
    LinkNotWorking,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 5] = [
        StanceLabel::Pro,
        StanceLabel::Neutral,
        StanceLabel::Against,
        StanceLabel::NotAbout,
        StanceLabel::LinkNotWorking,
    ];

    /// The four classification targets, in the fixed class order used by
    /// models, probability vectors and confusion matrices.
    pub const CLASSES: [StanceLabel; 4] = [
        StanceLabel::Pro,
        StanceLabel::Neutral,
        StanceLabel::Against,
        StanceLabel::NotAbout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Pro => "pro",
            StanceLabel::Neutral => "neutral",
            StanceLabel::Against => "against",
            StanceLabel::NotAbout => "not-about",
            StanceLabel::LinkNotWorking => "link-not-working",
        }
    }

    /// Position in [`StanceLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Position in [`StanceLabel::CLASSES`], `None` for `LinkNotWorking`.
    pub fn class_index(self) -> Option<usize> {
        match self {
            StanceLabel::LinkNotWorking => None,
            other => Some(other as usize),
        }
    }

    pub fn from_class_index(index: usize) -> StanceLabel {
        StanceLabel::CLASSES[index]
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.trim().to_ascii_lowercase();
        StanceLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == lowered)
            .ok_or_else(|| Error::ParseLabel(s.to_string()))
    }
}

impl Serialize for StanceLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StanceLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Occurrences of each label, indexed by [`StanceLabel::index`].
pub fn label_counts<'a>(labels: impl IntoIterator<Item = &'a StanceLabel>) -> [usize; 5] {
    let mut counts = [0; 5];
    for label in labels {
        counts[label.index()] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator_id: Option<String>,
    pub label: StanceLabel,
}

impl Annotation {
    pub fn new(label: StanceLabel) -> Self {
        Annotation {
            annotator_id: None,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub query_id: String,
    pub query_text: String,
    pub url: Option<String>,
    pub content: String,
    pub annotations: Vec<Annotation>,
}

impl Document {
    pub fn labels(&self) -> Vec<StanceLabel> {
        self.annotations.iter().map(|a| a.label).collect()
    }

    /// The label with a strictly maximal count, if there is one.
    pub fn plurality_label(&self) -> Option<StanceLabel> {
        let counts = label_counts(self.annotations.iter().map(|a| &a.label));
        let max = *counts.iter().max()?;
        let mut winners = StanceLabel::ALL.into_iter().filter(|l| counts[l.index()] == max);
        match (winners.next(), winners.next()) {
            (Some(label), None) if max > 0 => Some(label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub provenance: String,
}

impl Corpus {
    /// Builds a corpus, rejecting repeated `doc_id`s.
    pub fn new(documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSON-lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json-lines" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

const CSV_HEADER: [&str; 8] = [
    "doc_id",
    "query_id",
    "query_text",
    "url",
    "content",
    "label_1",
    "label_2",
    "label_3",
];

pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file))?,
        Format::Csv => read_csv(file)?,
    };
    corpus.provenance = format!("loaded from {}", path.display());
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Jsonl => write_jsonl(corpus, &mut out)?,
        Format::Csv => write_csv(corpus, &mut out)?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        documents.push(parse_json_record(&line, line_no)?);
    }
    Corpus::new(documents, "jsonl")
}

fn parse_json_record(line: &str, line_no: usize) -> Result<Document> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Record {
        line: line_no,
        field: "<json>".into(),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(Error::Record {
            line: line_no,
            field: "<json>".into(),
            message: "expected a JSON object".into(),
        });
    };

    let annotations = match obj.get("annotations") {
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .enumerate()
            .map(|(j, item)| parse_json_annotation(item, line_no, j))
            .collect::<Result<Vec<_>>>()?,
        Some(Value::Array(_)) => {
            return Err(Error::Record {
                line: line_no,
                field: "annotations".into(),
                message: "at least one annotation is required".into(),
            })
        }
        _ => {
            return Err(Error::Record {
                line: line_no,
                field: "annotations".into(),
                message: "missing or not an array".into(),
            })
        }
    };

    Ok(Document {
        doc_id: required_str(&obj, "doc_id", line_no)?,
        query_id: required_str(&obj, "query_id", line_no)?,
        query_text: required_str(&obj, "query_text", line_no)?,
        url: optional_str(&obj, "url", line_no)?,
        content: required_str(&obj, "content", line_no)?,
        annotations,
    })
}

fn parse_json_annotation(item: &Value, line_no: usize, index: usize) -> Result<Annotation> {
    let field = format!("annotations[{index}]");
    let Value::Object(obj) = item else {
        return Err(Error::Record {
            line: line_no,
            field,
            message: "expected an object".into(),
        });
    };
    let label = match obj.get("label") {
        Some(Value::String(s)) => s.parse().map_err(|_| Error::UnknownLabel {
            line: line_no,
            label: s.clone(),
        })?,
        _ => {
            return Err(Error::Record {
                line: line_no,
                field: format!("{field}.label"),
                message: "missing or not a string".into(),
            })
        }
    };
    Ok(Annotation {
        annotator_id: optional_str(obj, "annotator_id", line_no)?,
        label,
    })
}

fn required_str(obj: &Map<String, Value>, field: &str, line_no: usize) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Record {
            line: line_no,
            field: field.into(),
            message: "expected a string".into(),
        }),
        None => Err(Error::Record {
            line: line_no,
            field: field.into(),
            message: "missing".into(),
        }),
    }
}

fn optional_str(obj: &Map<String, Value>, field: &str, line_no: usize) -> Result<Option<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Error::Record {
            line: line_no,
            field: field.into(),
            message: "expected a string or null".into(),
        }),
    }
}

pub fn write_jsonl<W: Write>(corpus: &Corpus, out: &mut W) -> Result<()> {
    for doc in &corpus.documents {
        serde_json::to_writer(&mut *out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl output>", e))?;
    }
    Ok(())
}

/// Reads the fixed three-annotation CSV layout. An empty `url` cell reads
/// as no URL.
pub fn read_csv<R: Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a.trim() != b) {
        return Err(Error::Record {
            line: 1,
            field: "<header>".into(),
            message: format!("expected columns {}", CSV_HEADER.join(",")),
        });
    }

    let mut documents = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Record {
                line: line_no,
                field: "<row>".into(),
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let cell = |i: usize| record[i].to_string();
        let annotations = (5..8)
            .map(|i| {
                record[i].parse().map(Annotation::new).map_err(|_| Error::UnknownLabel {
                    line: line_no,
                    label: record[i].to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        documents.push(Document {
            doc_id: cell(0),
            query_id: cell(1),
            query_text: cell(2),
            url: Some(cell(3)).filter(|u| !u.is_empty()),
            content: cell(4),
            annotations,
        });
    }
    Corpus::new(documents, "csv")
}

/// Writes the CSV layout. Every document must carry exactly three
/// annotations; annotator ids are not representable and are dropped.
pub fn write_csv<W: Write>(corpus: &Corpus, out: &mut W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CSV_HEADER)?;
    for doc in &corpus.documents {
        if doc.annotations.len() != 3 {
            return Err(Error::Config(format!(
                "document {:?} has {} annotations; CSV holds exactly 3",
                doc.doc_id,
                doc.annotations.len()
            )));
        }
        let mut row = vec![
            doc.doc_id.as_str(),
            doc.query_id.as_str(),
            doc.query_text.as_str(),
            doc.url.as_deref().unwrap_or(""),
            doc.content.as_str(),
        ];
        row.extend(doc.annotations.iter().map(|a| a.label.as_str()));
        wtr.write_record(row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Number of maximal non-whitespace runs.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPolicy {
    /// Drop the document if any annotator marked the link as broken.
    #[default]
    AnyAnnotation,
    /// Drop only when `link-not-working` is the strict plurality label;
    /// stray `link-not-working` annotations on kept documents are stripped.
    MajorityOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_tokens: usize,
    pub drop_link_not_working: LinkPolicy,
    pub dedupe: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_tokens: 8000,
            drop_link_not_working: LinkPolicy::AnyAnnotation,
            dedupe: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("preprocess max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_size: usize,
    pub too_long_removed: usize,
    pub empty_content_removed: usize,
    pub duplicates_removed: usize,
    pub link_not_working_removed: usize,
    pub link_not_working_annotations_stripped: usize,
    pub final_size: usize,
    pub empty_output: bool,
}

/// Filters a corpus in three passes, in this order: over-length (and
/// blank) documents, exact duplicates of trimmed content (first occurrence
/// kept), then documents caught by the link-not-working policy.
pub fn preprocess(corpus: &Corpus, config: &PreprocessConfig) -> Result<(Corpus, PreprocessReport)> {
    config.validate()?;
    let mut report = PreprocessReport {
        input_size: corpus.len(),
        ..Default::default()
    };

    let mut seen_content: HashSet<&str> = HashSet::new();
    let mut kept = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let tokens = token_count(&doc.content);
        if tokens > config.max_tokens {
            report.too_long_removed += 1;
            continue;
        }
        if tokens == 0 {
            report.empty_content_removed += 1;
            continue;
        }
        if config.dedupe && !seen_content.insert(doc.content.trim()) {
            report.duplicates_removed += 1;
            continue;
        }
        kept.push(doc);
    }

    let mut documents = Vec::with_capacity(kept.len());
    for doc in kept {
        let broken = doc
            .annotations
            .iter()
            .filter(|a| a.label == StanceLabel::LinkNotWorking)
            .count();
        let drop = match config.drop_link_not_working {
            LinkPolicy::AnyAnnotation => broken > 0,
            LinkPolicy::MajorityOnly => doc.plurality_label() == Some(StanceLabel::LinkNotWorking),
        };
        if drop {
            report.link_not_working_removed += 1;
            continue;
        }
        let mut doc = doc.clone();
        if broken > 0 {
            doc.annotations.retain(|a| a.label != StanceLabel::LinkNotWorking);
            report.link_not_working_annotations_stripped += broken;
        }
        documents.push(doc);
    }

    report.final_size = documents.len();
    report.empty_output = documents.is_empty();
    let provenance = format!("{} | preprocessed", corpus.provenance);
    Ok((Corpus { documents, provenance }, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
    pub stratify_by_majority: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
            seed: 42,
            stratify_by_majority: true,
        }
    }
}

impl SplitSpec {
    pub fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = self.fractions();
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!(
                "split fractions must each lie in (0, 1), got {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1.0")));
        }
        Ok(())
    }
}

// Guards floor() against products like 0.7 * 10 landing just below 7.
const QUOTA_EPS: f64 = 1e-9;

/// Hamilton apportionment of `n` items over `fracs`; remainders are
/// handed out by descending fractional part, earlier parts winning ties.
pub fn largest_remainder(n: usize, fracs: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| (q + QUOTA_EPS).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - sizes[a] as f64;
        let rb = quotas[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Seeded train/validation/test partition.
///
/// Split sizes follow [`largest_remainder`] over the whole corpus. With
/// stratification, documents are grouped by plurality label (documents
/// without one form their own group), each group is shuffled, and the
/// per-group counts are the floors of their quotas plus at most one extra
/// document per cell, chosen so the global sizes come out exact.
/// Documents keep their input order inside each piece.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus"));
    }
    let fracs = spec.fractions();
    let n = corpus.len();
    let sizes = largest_remainder(n, &fracs);
    let mut rng = SeededRng::new(spec.seed);

    let mut strata: Vec<Vec<usize>> = if spec.stratify_by_majority {
        let mut groups = vec![Vec::new(); StanceLabel::ALL.len() + 1];
        for (i, doc) in corpus.documents.iter().enumerate() {
            let key = doc.plurality_label().map_or(StanceLabel::ALL.len(), |l| l.index());
            groups[key].push(i);
        }
        groups.retain(|g| !g.is_empty());
        groups
    } else {
        vec![(0..n).collect()]
    };
    for group in &mut strata {
        rng.shuffle(group);
    }

    let allocation = allocate(&strata, &fracs, &sizes);
    let mut pieces: [Vec<usize>; 3] = Default::default();
    for (group, counts) in strata.iter().zip(&allocation) {
        let mut rest = group.as_slice();
        for (piece, &count) in pieces.iter_mut().zip(counts) {
            let (head, tail) = rest.split_at(count);
            piece.extend_from_slice(head);
            rest = tail;
        }
    }

    let [train, val, test] = pieces.map(|mut idx| {
        idx.sort_unstable();
        idx
    });
    let build = |idx: Vec<usize>, name: &str| Corpus {
        documents: idx.into_iter().map(|i| corpus.documents[i].clone()).collect(),
        provenance: format!("{} | {name} split (seed {})", corpus.provenance, spec.seed),
    };
    Ok(Splits {
        train: build(train, "train"),
        val: build(val, "val"),
        test: build(test, "test"),
    })
}

/// Per-stratum piece counts with row sums equal to stratum sizes and
/// column sums equal to `sizes`. Starts from floored quotas and places the
/// leftover units with Ryser's greedy construction (rows with the largest
/// deficit first, each into the columns with the most room), which never
/// puts more than one extra unit in a cell.
fn allocate(strata: &[Vec<usize>], fracs: &[f64; 3], sizes: &[usize]) -> Vec<[usize; 3]> {
    let mut cells: Vec<[usize; 3]> = Vec::with_capacity(strata.len());
    let mut remainders: Vec<[f64; 3]> = Vec::with_capacity(strata.len());
    for group in strata {
        let mut row = [0usize; 3];
        let mut rem = [0f64; 3];
        for k in 0..3 {
            let quota = fracs[k] * group.len() as f64;
            row[k] = (quota + QUOTA_EPS).floor() as usize;
            rem[k] = quota - row[k] as f64;
        }
        cells.push(row);
        remainders.push(rem);
    }

    let mut col_deficit: Vec<usize> = (0..3)
        .map(|k| sizes[k] - cells.iter().map(|r| r[k]).sum::<usize>())
        .collect();
    let row_deficit: Vec<usize> = strata
        .iter()
        .zip(&cells)
        .map(|(g, r)| g.len() - r.iter().sum::<usize>())
        .collect();

    let mut rows: Vec<usize> = (0..strata.len()).collect();
    rows.sort_by(|&a, &b| row_deficit[b].cmp(&row_deficit[a]).then(a.cmp(&b)));
    for r in rows {
        let mut cols = [0usize, 1, 2];
        cols.sort_by(|&a, &b| {
            col_deficit[b]
                .cmp(&col_deficit[a])
                .then(
                    remainders[r][b]
                        .partial_cmp(&remainders[r][a])
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then(a.cmp(&b))
        });
        let mut need = row_deficit[r];
        for &k in cols.iter().chain(cols.iter()) {
            if need == 0 {
                break;
            }
            if col_deficit[k] > 0 {
                cells[r][k] += 1;
                col_deficit[k] -= 1;
                need -= 1;
            }
        }
        debug_assert_eq!(need, 0, "apportionment left documents unassigned");
    }
    cells
}
