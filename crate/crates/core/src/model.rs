//! TF-IDF features, a four-class softmax regression trained by seeded
//! gradient descent, chunk-level inference with length-weighted
//! aggregation, and import of probabilities produced by external models.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chunker::{chunk_document, Chunk, ChunkingConfig};
use crate::corpus::StanceLabel;
use crate::error::{Error, Result};
use crate::perspectives::TrainInstance;
use crate::rng::SeededRng;

pub const NUM_CLASSES: usize = 4;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probability vector in [`StanceLabel::CLASSES`] order.
pub type Probs = [f64; NUM_CLASSES];

/// Lowercased terms: whitespace-split, leading and trailing
/// non-alphanumeric characters removed, empty results dropped.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
}

impl FeatureSpace {
    /// Rebuilds a space from a lexicographically sorted vocabulary and its
    /// idf weights.
    pub fn from_parts(terms: Vec<String>, idf: Vec<f64>) -> Result<Self> {
        if terms.len() != idf.len() {
            return Err(Error::Model(format!(
                "{} vocabulary terms but {} idf weights",
                terms.len(),
                idf.len()
            )));
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model("vocabulary is not strictly sorted".into()));
        }
        if idf.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Model("idf weights must be finite and positive".into()));
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(FeatureSpace { terms, idf, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Vocabulary and smoothed idf, `ln((1 + N) / (1 + df)) + 1`, over `texts`.
pub fn fit_feature_space<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<FeatureSpace> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_texts = 0usize;
    for text in texts {
        n_texts += 1;
        let unique: HashSet<String> = terms(text).collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    if n_texts == 0 {
        return Err(Error::Empty("no training texts"));
    }
    if df.is_empty() {
        return Err(Error::Empty("training texts contain no terms"));
    }
    let n = n_texts as f64;
    let (terms, idf): (Vec<_>, Vec<_>) = df
        .into_iter()
        .map(|(term, d)| (term, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .unzip();
    FeatureSpace::from_parts(terms, idf)
}

/// Sparse vector with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// L2-normalized tf-idf vector; out-of-vocabulary terms are ignored.
pub fn vectorize(text: &str, space: &FeatureSpace) -> SparseVector {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for term in terms(text) {
        if let Some(col) = space.column(&term) {
            *tf.entry(col).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = tf.into_iter().map(|(c, f)| (c, f * space.idf[c])).collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    SparseVector { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    MiniBatch,
    FullBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 42,
            mode: TrainMode::MiniBatch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// One row of `n_features` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Probs,
    pub class_order: [StanceLabel; NUM_CLASSES],
    pub train_config: TrainConfig,
}

impl LinearModel {
    pub fn zeros(n_features: usize, train_config: TrainConfig) -> Self {
        LinearModel {
            weights: vec![vec![0.0; n_features]; NUM_CLASSES],
            bias: [0.0; NUM_CLASSES],
            class_order: StanceLabel::CLASSES,
            train_config,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights[0].len()
    }

    pub fn logits(&self, x: &SparseVector) -> Probs {
        let mut z = self.bias;
        for (c, row) in self.weights.iter().enumerate() {
            z[c] += x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
        z
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Probs {
        softmax(self.logits(x))
    }
}

pub fn softmax(z: Probs) -> Probs {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = z.map(|v| (v - max).exp());
    let sum: f64 = exp.iter().sum();
    exp.map(|e| e / sum)
}

/// A vectorized training example; `class` indexes [`StanceLabel::CLASSES`].
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub class: usize,
}

impl Example {
    pub fn from_instance(instance: &TrainInstance, space: &FeatureSpace) -> Result<Self> {
        let class = instance.label.class_index().ok_or(Error::NotAClass(instance.label))?;
        Ok(Example {
            features: vectorize(&instance.content, space),
            class,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Probs,
}

/// Mean cross-entropy of `examples` plus `l2 / 2 * ||W||^2` (bias not
/// penalized), with its gradient.
pub fn objective(model: &LinearModel, examples: &[Example], l2: f64) -> (f64, Gradient) {
    let w = 1.0 / examples.len() as f64;
    let groups: Vec<(usize, f64)> = (0..examples.len()).map(|i| (i, w)).collect();
    weighted_objective(model, examples, &groups, l2)
}

fn weighted_objective(model: &LinearModel, examples: &[Example], groups: &[(usize, f64)], l2: f64) -> (f64, Gradient) {
    let mut grad = Gradient {
        weights: vec![vec![0.0; model.n_features()]; NUM_CLASSES],
        bias: [0.0; NUM_CLASSES],
    };
    let mut loss = 0.0;
    for &(i, weight) in groups {
        let ex = &examples[i];
        let p = model.predict_proba(&ex.features);
        loss -= weight * p[ex.class].ln();
        for (c, (&pc, row)) in p.iter().zip(grad.weights.iter_mut()).enumerate() {
            let delta = weight * (pc - if c == ex.class { 1.0 } else { 0.0 });
            grad.bias[c] += delta;
            for &(j, v) in &ex.features.entries {
                row[j] += delta * v;
            }
        }
    }
    if l2 > 0.0 {
        let mut sq = 0.0;
        for (grow, wrow) in grad.weights.iter_mut().zip(&model.weights) {
            for (g, &w) in grow.iter_mut().zip(wrow) {
                *g += l2 * w;
                sq += w * w;
            }
        }
        loss += 0.5 * l2 * sq;
    }
    (loss, grad)
}

/// Collapses a batch into (representative example, weight) pairs, one per
/// distinct example in order of first appearance, weighted by
/// `count / batch_len`. Exact copies of a batch produce the same pairs
/// with bitwise-equal weights.
fn batch_groups(batch: &[usize], canonical: &[usize]) -> Vec<(usize, f64)> {
    let mut slots: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &i in batch {
        match slots.get(&canonical[i]) {
            Some(&slot) => groups[slot].1 += 1,
            None => {
                slots.insert(canonical[i], groups.len());
                groups.push((i, 1));
            }
        }
    }
    let total = batch.len() as f64;
    groups.into_iter().map(|(i, count)| (i, count as f64 / total)).collect()
}

fn canonical_ids(examples: &[Example]) -> Vec<usize> {
    let mut seen: HashMap<(usize, Vec<(usize, u64)>), usize> = HashMap::new();
    examples
        .iter()
        .map(|ex| {
            let key = (
                ex.class,
                ex.features.entries.iter().map(|&(j, v)| (j, v.to_bits())).collect(),
            );
            let next = seen.len();
            *seen.entry(key).or_insert(next)
        })
        .collect()
}

/// Softmax regression from zero initialisation.
///
/// Each step follows the mean gradient of its batch. `MiniBatch` reshuffles
/// the example order every epoch with the seeded generator and walks it in
/// `batch_size` slices (the last one may be short); `FullBatch` takes one
/// step per epoch over all examples in input order.
pub fn train_examples(examples: &[Example], n_features: usize, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("no training instances"));
    }
    if let Some(bad) = examples.iter().find(|e| e.class >= NUM_CLASSES) {
        return Err(Error::Model(format!("class index {} out of range", bad.class)));
    }
    let canonical = canonical_ids(examples);
    let mut model = LinearModel::zeros(n_features, config.clone());
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for _ in 0..config.epochs {
        match config.mode {
            TrainMode::FullBatch => step(&mut model, examples, &order, &canonical, config),
            TrainMode::MiniBatch => {
                rng.shuffle(&mut order);
                for batch in order.chunks(config.batch_size) {
                    step(&mut model, examples, batch, &canonical, config);
                }
            }
        }
    }
    Ok(model)
}

fn step(model: &mut LinearModel, examples: &[Example], batch: &[usize], canonical: &[usize], config: &TrainConfig) {
    let groups = batch_groups(batch, canonical);
    let (_, grad) = weighted_objective(model, examples, &groups, config.l2);
    let lr = config.learning_rate;
    for (wrow, grow) in model.weights.iter_mut().zip(&grad.weights) {
        for (w, g) in wrow.iter_mut().zip(grow) {
            *w -= lr * g;
        }
    }
    for (b, g) in model.bias.iter_mut().zip(grad.bias) {
        *b -= lr * g;
    }
}

/// Vectorizes `instances` (their `content`) in `space` and trains on them.
pub fn train(instances: &[TrainInstance], space: &FeatureSpace, config: &TrainConfig) -> Result<LinearModel> {
    if instances.is_empty() {
        return Err(Error::Empty("no training instances"));
    }
    let examples = instances
        .iter()
        .map(|inst| Example::from_instance(inst, space))
        .collect::<Result<Vec<_>>>()?;
    train_examples(&examples, space.len(), config)
}

/// Replaces every instance by one instance per chunk of its content, each
/// inheriting the label. With chunking disabled this is the truncated
/// input. Instances whose content yields no chunk are dropped.
pub fn expand_to_chunks(instances: &[TrainInstance], chunking: &ChunkingConfig) -> Result<Vec<TrainInstance>> {
    let mut cache: HashMap<&str, Vec<Chunk>> = HashMap::new();
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        if !cache.contains_key(inst.content.as_str()) {
            cache.insert(&inst.content, chunk_document(&inst.content, chunking)?);
        }
        for chunk in &cache[inst.content.as_str()] {
            out.push(TrainInstance {
                content: chunk.text.clone(),
                ..inst.clone()
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPrediction {
    pub chunk_index: usize,
    pub token_len: usize,
    pub probs: Probs,
}

pub fn predict_chunks(model: &LinearModel, space: &FeatureSpace, chunks: &[Chunk]) -> Vec<ChunkPrediction> {
    chunks
        .iter()
        .map(|chunk| ChunkPrediction {
            chunk_index: chunk.chunk_index,
            token_len: chunk.token_len,
            probs: model.predict_proba(&vectorize(&chunk.text, space)),
        })
        .collect()
}

/// Token-length weighted mean of chunk probability vectors,
/// `sum(len_i * p_i) / sum(len_i)`.
///
/// Identical inputs are returned unchanged, and each component is clamped
/// to the per-class range of the inputs so rounding cannot leave the
/// convex hull.
pub fn aggregate_chunk_predictions(per_chunk: &[(usize, Probs)]) -> Result<Probs> {
    let (first_len, first) = per_chunk
        .first()
        .ok_or(Error::Empty("no chunk predictions to aggregate"))?;
    if let Some(&(len, _)) = per_chunk.iter().find(|(len, _)| *len == 0) {
        return Err(Error::ChunkWeight(len));
    }
    debug_assert!(*first_len > 0);
    if per_chunk.iter().all(|(_, p)| p == first) {
        return Ok(*first);
    }
    let total: usize = per_chunk.iter().map(|(len, _)| len).sum();
    let mut out = [0.0; NUM_CLASSES];
    for (len, p) in per_chunk {
        for (o, v) in out.iter_mut().zip(p) {
            *o += *len as f64 * v;
        }
    }
    for (c, o) in out.iter_mut().enumerate() {
        *o /= total as f64;
        let lo = per_chunk.iter().map(|(_, p)| p[c]).fold(f64::INFINITY, f64::min);
        let hi = per_chunk.iter().map(|(_, p)| p[c]).fold(f64::NEG_INFINITY, f64::max);
        *o = o.clamp(lo, hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub probs: Probs,
    pub label: StanceLabel,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_chunk: Option<Vec<ChunkPrediction>>,
}

impl Prediction {
    /// Label is the argmax, earliest class winning ties; confidence is the
    /// probability of that label.
    pub fn from_probs(doc_id: impl Into<String>, probs: Probs, per_chunk: Option<Vec<ChunkPrediction>>) -> Self {
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        Prediction {
            doc_id: doc_id.into(),
            probs,
            label: StanceLabel::from_class_index(best),
            confidence: probs[best],
            per_chunk,
        }
    }
}

pub fn predict_document(
    model: &LinearModel,
    space: &FeatureSpace,
    doc_id: &str,
    content: &str,
    chunking: &ChunkingConfig,
) -> Result<Prediction> {
    let chunks = chunk_document(content, chunking)?;
    if chunks.is_empty() {
        return Err(Error::Empty("document has no content"));
    }
    let per_chunk = predict_chunks(model, space, &chunks);
    if !chunking.enabled {
        return Ok(Prediction::from_probs(doc_id, per_chunk[0].probs, None));
    }
    let weighted: Vec<(usize, Probs)> = per_chunk.iter().map(|c| (c.token_len, c.probs)).collect();
    let probs = aggregate_chunk_predictions(&weighted)?;
    Ok(Prediction::from_probs(doc_id, probs, Some(per_chunk)))
}

// Tolerance on |sum(probs) - 1| before an imported vector is renormalized.
const IMPORT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedPredictions {
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<String>,
}

pub fn import_external_predictions(path: impl AsRef<Path>) -> Result<ImportedPredictions> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_external_predictions(BufReader::new(file))
}

/// Reads `{"doc_id": .., "probs": [4 numbers]}` lines. Vectors off the
/// simplex by more than 1e-6 are renormalized with a warning.
pub fn read_external_predictions<R: BufRead>(reader: R) -> Result<ImportedPredictions> {
    let mut predictions = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let bad = |field: &str, message: String| Error::Record {
            line: line_no,
            field: field.into(),
            message,
        };
        let line = line.map_err(|e| bad("<line>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| bad("<json>", e.to_string()))?;
        let doc_id = match value.get("doc_id") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(bad("doc_id", "missing or not a string".into())),
        };
        let raw = match value.get("probs") {
            Some(Value::Array(items)) => items,
            _ => return Err(bad("probs", "missing or not an array".into())),
        };
        if raw.len() != NUM_CLASSES {
            return Err(bad(
                "probs",
                format!("expected {NUM_CLASSES} values, found {}", raw.len()),
            ));
        }
        let mut probs = [0.0; NUM_CLASSES];
        for (slot, v) in probs.iter_mut().zip(raw) {
            *slot = v
                .as_f64()
                .filter(|p| p.is_finite() && *p >= 0.0)
                .ok_or_else(|| bad("probs", format!("{v} is not a non-negative number")))?;
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(bad("probs", "probabilities sum to zero".into()));
        }
        if (sum - 1.0).abs() > IMPORT_SUM_TOLERANCE {
            let msg = format!("line {line_no}: probabilities for {doc_id:?} sum to {sum}; renormalized");
            log::warn!("{msg}");
            warnings.push(msg);
            probs = probs.map(|p| p / sum);
        }
        if !seen.insert(doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc_id));
        }
        predictions.push(Prediction::from_probs(doc_id, probs, None));
    }
    Ok(ImportedPredictions { predictions, warnings })
}

/// On-disk model: vocabulary, idf, parameters and the training
/// configuration, plus free-form metadata from the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub class_order: Vec<StanceLabel>,
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub train_config: TrainConfig,
    #[serde(default)]
    pub metadata: Value,
}

impl ModelFile {
    pub fn new(model: &LinearModel, space: &FeatureSpace, metadata: Value) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            class_order: model.class_order.to_vec(),
            vocabulary: space.terms.clone(),
            idf: space.idf.clone(),
            weights: model.weights.clone(),
            bias: model.bias.to_vec(),
            train_config: model.train_config.clone(),
            metadata,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Model("missing format_version".into()))?;
        if found != MODEL_FORMAT_VERSION as u64 {
            return Err(Error::ModelVersion {
                found: found as u32,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn into_parts(self) -> Result<(LinearModel, FeatureSpace)> {
        if self.class_order != StanceLabel::CLASSES {
            return Err(Error::Model(format!("unexpected class order {:?}", self.class_order)));
        }
        let space = FeatureSpace::from_parts(self.vocabulary, self.idf)?;
        if self.weights.len() != NUM_CLASSES || self.weights.iter().any(|r| r.len() != space.len()) {
            return Err(Error::Model("weight matrix shape does not match vocabulary".into()));
        }
        let bias: Probs = self
            .bias
            .try_into()
            .map_err(|_| Error::Model("bias must have 4 entries".into()))?;
        if self.weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok((
            LinearModel {
                weights: self.weights,
                bias,
                class_order: StanceLabel::CLASSES,
                train_config: self.train_config,
            },
            space,
        ))
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel, space: &FeatureSpace, metadata: Value) -> Result<()> {
    let path = path.as_ref();
    let json = ModelFile::new(model, space, metadata).to_json()?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(LinearModel, FeatureSpace, Value)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = ModelFile::from_json(&text)?;
    let metadata = file.metadata.clone();
    let (model, space) = file.into_parts()?;
    Ok((model, space, metadata))
}
