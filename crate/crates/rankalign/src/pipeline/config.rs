//! Pipeline configuration and its `key = value` text format.
//!
//! The config file is line oriented: one `section.key = value` per line,
//! `#` comments, blank lines ignored. Lists are comma separated. Stage seeds
//! are not configurable individually — they all derive from `master_seed`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::grpo::{GroupingMode, GrpoConfig};
use crate::mining::MiningStrategy;
use crate::prompt::LabelVocabulary;
use crate::sft::SftConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerArchConfig {
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub top_n: usize,
    pub strategy: MiningStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub rerank_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub split_ratios: [f64; 3],
    pub vocab: LabelVocabulary,
    pub scorer: ScorerArchConfig,
    pub sft: SftConfig,
    pub mining: MiningConfig,
    pub rm: SftConfig,
    pub grpo: GrpoConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            split_ratios: [0.5, 0.2, 0.3],
            vocab: LabelVocabulary::default(),
            scorer: ScorerArchConfig { hidden_dim: 32 },
            sft: SftConfig::default(),
            mining: MiningConfig {
                top_n: 5,
                strategy: MiningStrategy::Hard,
            },
            rm: SftConfig {
                learning_rate: 0.2,
                epochs: 20,
                batch_size: 32,
                seed: 0,
                shuffle: true,
            },
            grpo: GrpoConfig::default(),
            eval: EvalConfig {
                ks: vec![1, 3, 5],
                rerank_depth: 10,
            },
            output_dir: PathBuf::from("out"),
            master_seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.vocab.validate()?;
        self.sft.validate()?;
        self.rm.validate()?;
        self.grpo.validate()?;
        if self.scorer.hidden_dim < 1 {
            return Err(Error::InvalidConfig(
                "scorer.hidden_dim must be >= 1".into(),
            ));
        }
        if self.mining.top_n < 1 {
            return Err(Error::InvalidConfig("mining.top_n must be >= 1".into()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) || self.eval.rerank_depth < 1 {
            return Err(Error::InvalidConfig(
                "eval.ks must be nonempty with every k >= 1, and rerank_depth >= 1".into(),
            ));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|&r| r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "split.ratios must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(())
    }

    /// Parse a config file's text on top of the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key = value` overrides onto this configuration.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
        }
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            value.split(',').map(|v| num::<T>(key, v.trim())).collect()
        }
        fn triple(key: &str, value: &str) -> Result<[f64; 3]> {
            let v: Vec<f64> = list(key, value)?;
            v.try_into()
                .map_err(|_| Error::InvalidConfig(format!("{key}: expected three fractions")))
        }

        match key {
            "master_seed" => self.master_seed = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "corpus.num_queries" => self.corpus.num_queries = num(key, value)?,
            "corpus.candidates_per_query" => self.corpus.candidates_per_query = num(key, value)?,
            "corpus.feature_dim" => self.corpus.feature_dim = num(key, value)?,
            "corpus.modality_mix" => self.corpus.modality_mix = triple(key, value)?,
            "corpus.modality_offset_scale" => self.corpus.modality_offset_scale = num(key, value)?,
            "corpus.noise_scale" => self.corpus.noise_scale = num(key, value)?,
            "corpus.relevance_threshold" => self.corpus.relevance_threshold = num(key, value)?,
            "split.ratios" => self.split_ratios = triple(key, value)?,
            "vocab.positive" => self.vocab.positive = value.to_string(),
            "vocab.negative" => self.vocab.negative = value.to_string(),
            "scorer.hidden_dim" => self.scorer.hidden_dim = num(key, value)?,
            "sft.learning_rate" => self.sft.learning_rate = num(key, value)?,
            "sft.epochs" => self.sft.epochs = num(key, value)?,
            "sft.batch_size" => self.sft.batch_size = num(key, value)?,
            "sft.shuffle" => self.sft.shuffle = num(key, value)?,
            "mining.top_n" => self.mining.top_n = num(key, value)?,
            "mining.strategy" => {
                self.mining.strategy = match value {
                    "hard" => MiningStrategy::Hard,
                    "random" => MiningStrategy::Random,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "mining.strategy: expected hard|random, got {other:?}"
                        )))
                    }
                }
            }
            "rm.learning_rate" => self.rm.learning_rate = num(key, value)?,
            "rm.epochs" => self.rm.epochs = num(key, value)?,
            "rm.batch_size" => self.rm.batch_size = num(key, value)?,
            "rm.shuffle" => self.rm.shuffle = num(key, value)?,
            "grpo.group_size" => self.grpo.group_size = num(key, value)?,
            "grpo.clip_epsilon" => self.grpo.clip_epsilon = num(key, value)?,
            "grpo.advantage_delta" => self.grpo.advantage_delta = num(key, value)?,
            "grpo.kl_coefficient" => self.grpo.kl_coefficient = num(key, value)?,
            "grpo.temperature" => self.grpo.temperature = num(key, value)?,
            "grpo.top_p" => self.grpo.top_p = num(key, value)?,
            "grpo.learning_rate" => self.grpo.learning_rate = num(key, value)?,
            "grpo.steps" => self.grpo.steps = num(key, value)?,
            "grpo.grouping_mode" => {
                self.grpo.grouping_mode = match value {
                    "query_level" => GroupingMode::QueryLevel,
                    "prompt_level" => GroupingMode::PromptLevel,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "grpo.grouping_mode: expected query_level|prompt_level, got {other:?}"
                        )))
                    }
                }
            }
            "eval.ks" => self.eval.ks = list(key, value)?,
            "eval.rerank_depth" => self.eval.rerank_depth = num(key, value)?,
            "corpus.seed" | "sft.seed" | "rm.seed" | "grpo.seed" => {
                return Err(Error::InvalidConfig(format!(
                    "{key}: stage seeds are derived from master_seed and cannot be set directly"
                )))
            }
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Render the configuration in the same `key = value` format the parser
    /// accepts. Round-trips exactly; also used for the config digest and the
    /// CLI's defaults listing.
    pub fn to_kv_text(&self) -> String {
        let strategy = match self.mining.strategy {
            MiningStrategy::Hard => "hard",
            MiningStrategy::Random => "random",
        };
        let mode = match self.grpo.grouping_mode {
            GroupingMode::QueryLevel => "query_level",
            GroupingMode::PromptLevel => "prompt_level",
        };
        let join = |v: &[usize]| {
            v.iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "master_seed = {}\n\
             output_dir = {}\n\
             corpus.num_queries = {}\n\
             corpus.candidates_per_query = {}\n\
             corpus.feature_dim = {}\n\
             corpus.modality_mix = {},{},{}\n\
             corpus.modality_offset_scale = {}\n\
             corpus.noise_scale = {}\n\
             corpus.relevance_threshold = {}\n\
             split.ratios = {},{},{}\n\
             vocab.positive = {}\n\
             vocab.negative = {}\n\
             scorer.hidden_dim = {}\n\
             sft.learning_rate = {}\n\
             sft.epochs = {}\n\
             sft.batch_size = {}\n\
             sft.shuffle = {}\n\
             mining.top_n = {}\n\
             mining.strategy = {}\n\
             rm.learning_rate = {}\n\
             rm.epochs = {}\n\
             rm.batch_size = {}\n\
             rm.shuffle = {}\n\
             grpo.group_size = {}\n\
             grpo.clip_epsilon = {}\n\
             grpo.advantage_delta = {}\n\
             grpo.kl_coefficient = {}\n\
             grpo.temperature = {}\n\
             grpo.top_p = {}\n\
             grpo.learning_rate = {}\n\
             grpo.steps = {}\n\
             grpo.grouping_mode = {}\n\
             eval.ks = {}\n\
             eval.rerank_depth = {}\n",
            self.master_seed,
            self.output_dir.display(),
            self.corpus.num_queries,
            self.corpus.candidates_per_query,
            self.corpus.feature_dim,
            self.corpus.modality_mix[0],
            self.corpus.modality_mix[1],
            self.corpus.modality_mix[2],
            self.corpus.modality_offset_scale,
            self.corpus.noise_scale,
            self.corpus.relevance_threshold,
            self.split_ratios[0],
            self.split_ratios[1],
            self.split_ratios[2],
            self.vocab.positive,
            self.vocab.negative,
            self.scorer.hidden_dim,
            self.sft.learning_rate,
            self.sft.epochs,
            self.sft.batch_size,
            self.sft.shuffle,
            self.mining.top_n,
            strategy,
            self.rm.learning_rate,
            self.rm.epochs,
            self.rm.batch_size,
            self.rm.shuffle,
            self.grpo.group_size,
            self.grpo.clip_epsilon,
            self.grpo.advantage_delta,
            self.grpo.kl_coefficient,
            self.grpo.temperature,
            self.grpo.top_p,
            self.grpo.learning_rate,
            self.grpo.steps,
            mode,
            join(&self.eval.ks),
            self.eval.rerank_depth,
        )
    }
}
