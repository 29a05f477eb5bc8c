//! Run configuration: a single JSON document describing data locations,
//! preparation settings, model dimensions, training hyperparameters and
//! generation flags. Command-line flags override file values; the resolved
//! config is serialized alongside every checkpoint so runs are reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{FieldMap, TruncationCaps};
use crate::error::{CoreError, Result};
use crate::model::Dims;
use crate::pipeline::SummaryOptions;
use crate::reconstructor::TrainingConfig;

/// Input data locations and the field-name mapping for JSON Lines records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_path: PathBuf,
    #[serde(default)]
    pub valid_path: Option<PathBuf>,
    #[serde(default)]
    pub eval_path: Option<PathBuf>,
    #[serde(default)]
    pub fields: FieldMap,
}

/// Corpus preparation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    /// Vocabulary cap counted over training-set tokens.
    pub vocab_cap: usize,
    /// Minimum sentence count for training documents.
    pub min_train_sentences: usize,
    /// Minimum sentence count for validation/evaluation documents.
    pub min_eval_sentences: usize,
    pub caps: TruncationCaps,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            vocab_cap: 50_000,
            min_train_sentences: 10,
            min_eval_sentences: 5,
            caps: TruncationCaps::default(),
        }
    }
}

/// Model dimensions plus optional pre-trained vector initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed: usize,
    pub hidden: usize,
    pub d_e: usize,
    pub d_f: usize,
    /// Plain-text vector file ("token v1 … vD" per line); tokens absent from
    /// the file keep their random initialization.
    #[serde(default)]
    pub pretrained_vectors: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed: 300,
            hidden: 256,
            d_e: 384,
            d_f: 128,
            pretrained_vectors: None,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, vocab: usize) -> Dims {
        Dims {
            vocab,
            embed: self.embed,
            hidden: self.hidden,
            d_e: self.d_e,
            d_f: self.d_f,
        }
    }
}

/// Training-loop settings beyond the optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Run beam-search validation every this many epochs (0 disables).
    pub validate_every: usize,
    /// Stop early once the per-token training loss drops below this value.
    #[serde(default)]
    pub early_stop_loss: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { validate_every: 1, early_stop_loss: None }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub prepare: PrepareConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub run: LoopConfig,
    #[serde(default)]
    pub summary: SummaryOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.prepare.vocab_cap == 0 {
            return Err(CoreError::Config("vocab_cap must be positive".into()));
        }
        if self.model.embed == 0 || self.model.hidden == 0 {
            return Err(CoreError::Config("model dimensions must be positive".into()));
        }
        if self.model.d_e + self.model.d_f != 2 * self.model.hidden {
            return Err(CoreError::Config(format!(
                "d_e + d_f must equal 2*hidden, got {} + {} != {}",
                self.model.d_e,
                self.model.d_f,
                2 * self.model.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.summary.lambda) {
            return Err(CoreError::Config("lambda must lie in [0, 1)".into()));
        }
        if self.summary.beam_size == 0 || self.summary.max_summary_len == 0 {
            return Err(CoreError::Config(
                "beam_size and max_summary_len must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(CoreError::Json)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Artifact paths inside the output directory.
    pub fn vocab_path(&self) -> PathBuf {
        self.output_dir.join("vocab.txt")
    }
    pub fn docs_path(&self, split: &str) -> PathBuf {
        self.output_dir.join(format!("{split}.docs.jsonl"))
    }
    pub fn latest_checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("latest.ckpt")
    }
    pub fn best_checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("best.ckpt")
    }
    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join("metrics.jsonl")
    }
    pub fn config_snapshot_path(&self) -> PathBuf {
        self.output_dir.join("config.json")
    }
}
