use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use stance_core::chunker::ChunkingConfig;
use stance_core::corpus::{Format, PreprocessConfig, SplitSpec, StanceLabel};
use stance_core::evaluation::ExperimentConfig;
use stance_core::model::{TrainConfig, TrainMode};
use stance_core::perspectives::TiePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TiePolicyArg {
    Discard,
    Precedence,
    Error,
}

/// Flags shared by every subcommand. Each one overrides the matching
/// value from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input corpus (or gold corpus for `eval`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file (a directory for `split`).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input corpus format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Seed for splitting and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Chunk / truncation length; the length cutoff for `ingest`.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub overlap_sentences: Option<usize>,
    /// Truncate documents instead of chunking them.
    #[arg(long)]
    pub no_chunking: bool,
    #[arg(long, value_enum)]
    pub tie_policy: Option<TiePolicyArg>,
    /// Multi-perspective: one instance per distinct label of a document.
    #[arg(long)]
    pub distinct_only: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub full_batch: bool,
    /// JSON-lines file of `{doc_id, probs}` produced by another model.
    #[arg(long)]
    pub external_preds: Option<PathBuf>,
}

/// Every knob of a run. Parsed from TOML, then overridden by flags; the
/// resolved value is embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub external_preds: Option<PathBuf>,
    pub distinct_only: bool,
    pub preprocess: PreprocessConfig,
    pub split: SplitSpec,
    pub tie_policy: TiePolicy,
    pub chunking: ChunkingConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            output: None,
            format: None,
            external_preds: None,
            distinct_only: false,
            preprocess: PreprocessConfig::default(),
            split: SplitSpec::default(),
            tie_policy: TiePolicy::Discard,
            chunking: ChunkingConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for slot in [&mut config.input, &mut config.output, &mut config.external_preds] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// `length_flag_is_preprocess` routes `--max-tokens` to the
    /// preprocessing cutoff instead of the chunk length.
    pub fn resolve(args: &CommonArgs, length_flag_is_preprocess: bool) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &args.input {
            config.input = Some(p.clone());
        }
        if let Some(p) = &args.output {
            config.output = Some(p.clone());
        }
        if let Some(p) = &args.external_preds {
            config.external_preds = Some(p.clone());
        }
        if let Some(f) = args.format {
            config.format = Some(f.into());
        }
        if let Some(seed) = args.seed {
            config.split.seed = seed;
            config.train.seed = seed;
        }
        if let Some(n) = args.max_tokens {
            if length_flag_is_preprocess {
                config.preprocess.max_tokens = n;
            } else {
                config.chunking.max_tokens = n;
            }
        }
        if let Some(n) = args.overlap_sentences {
            config.chunking.overlap_sentences = n;
        }
        if args.no_chunking {
            config.chunking.enabled = false;
        }
        if let Some(policy) = args.tie_policy {
            config.tie_policy = match (policy, &config.tie_policy) {
                (TiePolicyArg::Discard, _) => TiePolicy::Discard,
                (TiePolicyArg::Error, _) => TiePolicy::Error,
                (TiePolicyArg::Precedence, TiePolicy::FixedPrecedence(order)) => TiePolicy::FixedPrecedence(*order),
                (TiePolicyArg::Precedence, _) => TiePolicy::FixedPrecedence(StanceLabel::CLASSES),
            };
        }
        if args.distinct_only {
            config.distinct_only = true;
        }
        if let Some(n) = args.epochs {
            config.train.epochs = n;
        }
        if let Some(n) = args.batch_size {
            config.train.batch_size = n;
        }
        if args.full_batch {
            config.train.mode = TrainMode::FullBatch;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.split.validate()?;
        self.tie_policy.validate()?;
        self.chunking.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input given (use --input or set `input` in the config file)"),
        }
    }

    pub fn input_format(&self) -> Result<Format> {
        Ok(self
            .format
            .unwrap_or_else(|| Format::from_path(self.input.as_deref().unwrap_or(Path::new("")))))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            split: self.split.clone(),
            tie_policy: self.tie_policy.clone(),
            chunking: ChunkingConfig {
                enabled: true,
                ..self.chunking.clone()
            },
            train: self.train.clone(),
            distinct_only: self.distinct_only,
        }
    }
}
