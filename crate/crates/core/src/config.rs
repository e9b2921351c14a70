//! Run configuration file (JSON) and command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CorpusFormat, DatasetParams, SplitSpec};
use crate::embedding::{TrigramTable, DEFAULT_DIM};
use crate::loss::{LossConfig, LossMode};
use crate::model::{EncoderKind, ModelConfig};
use crate::trainer::TrainConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config format version {found} is not supported (expected {CONFIG_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    /// Inferred from the corpus extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_format: Option<CorpusFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_table: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSettings {
    /// Dimension of generated fallback vectors when no table is given.
    pub dim: usize,
    /// Allow running without a pretrained table (every lookup generated).
    pub allow_fallback: bool,
    pub fallback_seed: u64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            dim: DEFAULT_DIM,
            allow_fallback: true,
            fallback_seed: 0,
        }
    }
}

/// Model hyperparameters except the input dimension, which comes from the
/// embedding table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub attention_dim: usize,
    pub out_dim: usize,
    pub d_k: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::lstm(1);
        ModelSettings {
            encoder: m.encoder,
            hidden: m.hidden,
            attention_dim: m.attention_dim,
            out_dim: m.out_dim,
            d_k: m.d_k,
            ffn_hidden: m.ffn_hidden,
            dropout: m.dropout,
        }
    }
}

impl ModelSettings {
    pub fn with_input_dim(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder,
            input_dim,
            hidden: self.hidden,
            attention_dim: self.attention_dim,
            out_dim: self.out_dim,
            d_k: self.d_k,
            ffn_hidden: self.ffn_hidden,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub embedding: EmbeddingSettings,
    pub dataset: DatasetParams,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub loss: LossConfig,
}

/// Command-line values that replace config entries when given.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub trials: Option<usize>,
    pub window: Option<usize>,
    pub loss: Option<LossMode>,
    pub embedding_table: Option<PathBuf>,
    pub embedding_dim: Option<usize>,
}

impl RunConfig {
    /// Defaults for everything but the corpus, sites and output directory.
    pub fn new(corpus: PathBuf, out_dir: PathBuf, positions: Vec<usize>) -> Self {
        RunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            paths: Paths {
                corpus,
                corpus_format: None,
                embedding_table: None,
                out_dir,
            },
            embedding: EmbeddingSettings::default(),
            dataset: DatasetParams {
                window: 5,
                positions,
                draws: None,
                kmeans: Default::default(),
            },
            split: SplitSpec::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Head {
            format_version: u32,
        }
        let head: Head = serde_json::from_str(text)?;
        if head.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::Version {
                found: head.format_version,
            });
        }
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.corpus);
        fix(&mut cfg.paths.out_dir);
        if let Some(t) = cfg.paths.embedding_table.as_mut() {
            fix(t);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String, ConfigError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out_dir {
            self.paths.out_dir = v.clone();
        }
        if let Some(v) = o.trials {
            self.train.trials = v;
        }
        if let Some(v) = o.window {
            self.dataset.window = v;
        }
        if let Some(v) = o.loss {
            self.loss.mode = v;
        }
        if let Some(v) = &o.embedding_table {
            self.paths.embedding_table = Some(v.clone());
        }
        if let Some(v) = o.embedding_dim {
            self.embedding.dim = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::Version {
                found: self.format_version,
            });
        }
        self.dataset.validate().map_err(|e| invalid(&e))?;
        self.split.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.loss.validate().map_err(|e| invalid(&e))?;
        self.model.with_input_dim(1).validate().map_err(|e| invalid(&e))?;
        if self.embedding.dim == 0 {
            return Err(ConfigError::Invalid("embedding dim must be positive".into()));
        }
        if self.model.encoder == EncoderKind::Lstm && self.dataset.window < 2 {
            return Err(ConfigError::Invalid(
                "the LSTM encoder needs a window T of at least 2".into(),
            ));
        }
        if self.paths.embedding_table.is_none() && !self.embedding.allow_fallback {
            return Err(ConfigError::Invalid(
                "no embedding table given and fallback vectors are disabled".into(),
            ));
        }
        Ok(())
    }

    pub fn corpus_format(&self) -> Result<CorpusFormat, ConfigError> {
        self.paths
            .corpus_format
            .or_else(|| CorpusFormat::from_path(&self.paths.corpus))
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "cannot infer corpus format of {}; set paths.corpus_format",
                    self.paths.corpus.display()
                ))
            })
    }

    /// The configured table, or a generated one when none is given.
    pub fn embedding_table(&self) -> Result<TrigramTable, crate::embedding::EmbeddingError> {
        match &self.paths.embedding_table {
            Some(p) => TrigramTable::load(p, self.embedding.fallback_seed),
            None => Ok(TrigramTable::fallback_only(
                self.embedding.dim,
                self.embedding.fallback_seed,
            )),
        }
    }

    pub fn samples_path(&self) -> PathBuf {
        self.paths.out_dir.join("samples.jsonl")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.out_dir.join("manifest.json")
    }

    pub fn checkpoint_path(&self, trial: usize) -> PathBuf {
        self.paths.out_dir.join(checkpoint_name(trial))
    }
}

/// File name of a trial's checkpoint inside the output directory.
pub fn checkpoint_name(trial: usize) -> String {
    format!("checkpoint_trial{trial}.json")
}
