use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use stance_core::agreement::agreement_report;
use stance_core::chunker::chunk_document;
use stance_core::corpus::{load_corpus, preprocess, write_jsonl, Corpus, StanceLabel};
use stance_core::evaluation::{disagreement_levels, evaluate, gold_labels, render_table, run_experiment, EvalResult};
use stance_core::model::{
    expand_to_chunks, fit_feature_space, import_external_predictions, load_model, predict_document, save_model,
    Prediction,
};
use stance_core::perspectives::{build_baseline_dataset, disaggregate, majority_labels, TrainInstance};

use crate::config::{CommonArgs, RunConfig};
use crate::ApproachArg;

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn input_hashes(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), file_sha256(p)?)))
        .collect()
}

/// Wraps a payload with the resolved configuration and input digests. The
/// output location is left out so equal inputs give byte-identical files.
fn artifact(
    config: &RunConfig,
    inputs: &BTreeMap<String, String>,
    key: &str,
    payload: impl Serialize,
) -> Result<Value> {
    let mut obj = serde_json::Map::new();
    let embedded = RunConfig {
        output: None,
        ..config.clone()
    };
    obj.insert("run_config".into(), serde_json::to_value(embedded)?);
    obj.insert("input_sha256".into(), serde_json::to_value(inputs)?);
    obj.insert(key.into(), serde_json::to_value(payload)?);
    Ok(Value::Object(obj))
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn write_lines<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar `<output>.meta.json` for JSON-lines artifacts.
fn write_meta(output: Option<&Path>, meta: &Value) -> Result<()> {
    if let Some(out) = output {
        let mut name = out.as_os_str().to_owned();
        name.push(".meta.json");
        write_json(Some(&PathBuf::from(name)), meta)?;
    }
    Ok(())
}

fn load(config: &RunConfig) -> Result<Corpus> {
    let path = config.input()?;
    load_corpus(path, config.input_format()?).with_context(|| format!("loading {}", path.display()))
}

pub fn ingest(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, true)?;
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let (clean, report) = preprocess(&corpus, &config.preprocess)?;
    if report.empty_output {
        log::warn!("preprocessing removed every document");
    }

    let output = config.output.as_deref();
    match output {
        Some(p) => {
            let mut out = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            write_jsonl(&clean, &mut out)?;
            out.flush()?;
        }
        None => write_jsonl(&clean, &mut io::stdout().lock())?,
    }
    let meta = artifact(&config, &inputs, "preprocess_report", &report)?;
    write_meta(output, &meta)?;
    eprintln!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn stats(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let report = agreement_report(&corpus)?;

    let (majority, ties) = majority_labels(&corpus, &config.tie_policy)?;
    let mut majority_dist: BTreeMap<String, usize> = StanceLabel::CLASSES
        .iter()
        .map(|l| (l.as_str().to_string(), 0))
        .collect();
    for label in majority.iter().flatten() {
        *majority_dist.entry(label.as_str().to_string()).or_insert(0) += 1;
    }
    majority_dist.insert("tie".into(), ties.discarded.len());

    let mut table = String::new();
    table.push_str(&format!("documents            {}\n", report.n_items));
    table.push_str(&format!("annotations per doc  {}\n", report.n_raters));
    table.push_str(&format!("Fleiss' kappa        {:.4}\n", report.fleiss_kappa));
    table.push_str(&format!("pairwise agreement   {:.4}\n", report.pairwise_agreement));
    table.push_str("\nlabel               original  majority\n");
    for label in StanceLabel::ALL {
        let name = label.as_str();
        let majority = majority_dist.get(name).map_or("-".to_string(), |c| c.to_string());
        table.push_str(&format!(
            "{name:<18} {:>9} {majority:>9}\n",
            report.per_label_counts[name]
        ));
    }
    table.push_str(&format!("{:<18} {:>9} {:>9}\n", "tie", "-", ties.discarded.len()));
    table.push_str("\ndisagreement level  documents\n");
    for (level, count) in &report.disagreement_histogram {
        table.push_str(&format!("{level:<18} {count:>10}\n"));
    }
    eprint!("{table}");

    let payload = json!({
        "agreement": report,
        "label_distribution": {
            "original": report.per_label_counts,
            "majority": majority_dist,
        },
    });
    write_json(config.output.as_deref(), &artifact(&config, &inputs, "stats", payload)?)
}

pub fn split(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let Some(dir) = config.output.as_deref() else {
        bail!("split needs --output <directory>");
    };
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let splits = stance_core::corpus::split(&corpus, &config.split)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, piece) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let path = dir.join(format!("{name}.jsonl"));
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write_jsonl(piece, &mut out)?;
        out.flush()?;
    }
    let sizes = json!({
        "train": splits.train.len(),
        "val": splits.val.len(),
        "test": splits.test.len(),
    });
    eprintln!("split sizes: {sizes}");
    write_json(
        Some(&dir.join("split.meta.json")),
        &artifact(&config, &inputs, "split_sizes", sizes)?,
    )
}

fn instances_for(corpus: &Corpus, config: &RunConfig, approach: ApproachArg) -> Result<(Vec<TrainInstance>, Value)> {
    Ok(match approach {
        ApproachArg::Baseline => {
            let (instances, ties) = build_baseline_dataset(corpus, &config.tie_policy)?;
            let summary = json!({"approach": "baseline", "instances": instances.len(), "ties": ties});
            (instances, summary)
        }
        ApproachArg::MultiPerspective => {
            let instances = disaggregate(corpus, config.distinct_only);
            let summary = json!({
                "approach": "multi_perspective",
                "instances": instances.len(),
                "distinct_only": config.distinct_only,
            });
            (instances, summary)
        }
    })
}

pub fn build(args: &CommonArgs, approach: ApproachArg) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let (instances, summary) = instances_for(&corpus, &config, approach)?;
    write_lines(config.output.as_deref(), &instances)?;
    write_meta(
        config.output.as_deref(),
        &artifact(&config, &inputs, "dataset", &summary)?,
    )?;
    eprintln!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct ChunkLine<'a> {
    doc_id: &'a str,
    chunk_index: usize,
    token_len: usize,
    text: &'a str,
}

pub fn chunk(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let mut all = Vec::new();
    let mut fragments = 0usize;
    for doc in &corpus.documents {
        for chunk in chunk_document(&doc.content, &config.chunking)? {
            fragments += chunk.fragment as usize;
            all.push((doc.doc_id.as_str(), chunk));
        }
    }
    let lines: Vec<ChunkLine> = all
        .iter()
        .map(|(doc_id, c)| ChunkLine {
            doc_id,
            chunk_index: c.chunk_index,
            token_len: c.token_len,
            text: &c.text,
        })
        .collect();
    write_lines(config.output.as_deref(), &lines)?;
    let summary = json!({"documents": corpus.len(), "chunks": lines.len(), "hard_split_fragments": fragments});
    write_meta(
        config.output.as_deref(),
        &artifact(&config, &inputs, "chunks", &summary)?,
    )?;
    eprintln!("{summary}");
    Ok(())
}

pub fn train(args: &CommonArgs, approach: ApproachArg) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let Some(output) = config.output.as_deref() else {
        bail!("train needs --output <model file>");
    };
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let (instances, summary) = instances_for(&corpus, &config, approach)?;

    let mut texts = Vec::new();
    for doc in &corpus.documents {
        texts.extend(
            chunk_document(&doc.content, &config.chunking)?
                .into_iter()
                .map(|c| c.text),
        );
    }
    let space = fit_feature_space(texts.iter().map(String::as_str))?;
    let examples = expand_to_chunks(&instances, &config.chunking)?;
    let model = stance_core::model::train(&examples, &space, &config.train)?;
    save_model(output, &model, &space, artifact(&config, &inputs, "dataset", &summary)?)?;
    eprintln!(
        "trained on {} examples ({} instances), vocabulary {}",
        examples.len(),
        instances.len(),
        space.len()
    );
    Ok(())
}

/// Scores predictions against majority labels of `gold_path`; predictions
/// for documents whose majority vote was a discarded tie are skipped.
fn score(config: &RunConfig, preds: Vec<Prediction>, gold_path: &Path) -> Result<EvalResult> {
    let gold_corpus = load_corpus(
        gold_path,
        config
            .format
            .unwrap_or_else(|| stance_core::corpus::Format::from_path(gold_path)),
    )
    .with_context(|| format!("loading {}", gold_path.display()))?;
    let (gold, ties) = gold_labels(&gold_corpus, &config.tie_policy)?;
    let discarded: HashSet<&str> = ties.discarded.iter().map(String::as_str).collect();
    let preds: Vec<Prediction> = preds
        .into_iter()
        .filter(|p| !discarded.contains(p.doc_id.as_str()))
        .collect();
    if !discarded.is_empty() {
        log::warn!(
            "{} gold documents without a majority label were skipped",
            discarded.len()
        );
    }
    let levels = disagreement_levels(&gold_corpus)?;
    Ok(evaluate(&preds, &gold, &levels)?)
}

pub fn predict(args: &CommonArgs, model_path: Option<&Path>, eval_path: Option<&Path>) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let mut input_paths: Vec<&Path> = Vec::new();

    let predictions = if let Some(external) = config.external_preds.as_deref() {
        input_paths.push(external);
        let imported =
            import_external_predictions(external).with_context(|| format!("importing {}", external.display()))?;
        for w in &imported.warnings {
            eprintln!("warning: {w}");
        }
        imported.predictions
    } else {
        let Some(model_path) = model_path else {
            bail!("predict needs --model <file> or --external-preds <file>");
        };
        input_paths.push(model_path);
        input_paths.push(config.input()?);
        let (model, space, _) = load_model(model_path).with_context(|| format!("loading {}", model_path.display()))?;
        let corpus = load(&config)?;
        corpus
            .documents
            .iter()
            .map(|d| predict_document(&model, &space, &d.doc_id, &d.content, &config.chunking))
            .collect::<Result<Vec<_>, _>>()?
    };

    if let Some(gold) = eval_path {
        input_paths.push(gold);
    }
    let inputs = input_hashes(&input_paths)?;
    if config.output.is_some() || eval_path.is_none() {
        write_lines(config.output.as_deref(), &predictions)?;
        let summary = json!({"predictions": predictions.len()});
        write_meta(
            config.output.as_deref(),
            &artifact(&config, &inputs, "predictions", summary)?,
        )?;
    }
    if let Some(gold) = eval_path {
        let result = score(&config, predictions, gold)?;
        write_json(None, &artifact(&config, &inputs, "evaluation", &result)?)?;
    }
    Ok(())
}

pub fn eval(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let Some(preds_path) = config.external_preds.as_deref() else {
        bail!("eval needs --external-preds <predictions file>");
    };
    let gold = config.input()?;
    let inputs = input_hashes(&[preds_path, gold])?;
    let imported =
        import_external_predictions(preds_path).with_context(|| format!("importing {}", preds_path.display()))?;
    for w in &imported.warnings {
        eprintln!("warning: {w}");
    }
    let result = score(&config, imported.predictions, gold)?;
    write_json(
        config.output.as_deref(),
        &artifact(&config, &inputs, "evaluation", &result)?,
    )
}

pub fn experiment(args: &CommonArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let corpus = load(&config)?;
    let inputs = input_hashes(&[config.input()?])?;
    let (clean, preprocess_report) = preprocess(&corpus, &config.preprocess)?;
    let report = run_experiment(&clean, &config.experiment())?;

    let payload = json!({"preprocess": preprocess_report, "report": report});
    let value = artifact(&config, &inputs, "experiment", payload)?;
    write_json(config.output.as_deref(), &value)?;

    let mut table = render_table(&report);
    table.push_str(&format!("\nconfig fingerprint: {}\n", report.config_fingerprint));
    for (path, digest) in &inputs {
        table.push_str(&format!("input {path}: sha256 {digest}\n"));
    }
    if let Some(out) = config.output.as_deref() {
        let txt = out.with_extension("txt");
        fs::write(&txt, &table).with_context(|| format!("writing {}", txt.display()))?;
    }
    eprint!("{table}");
    Ok(())
}
