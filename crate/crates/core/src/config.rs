//! Run configuration, read from TOML.
//!
//! Every section is optional and falls back to its defaults, so an empty
//! file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::embed::{AuxMode, EmbedConfig};
use crate::fdcae::{Condition, ModelConfig, TrainConfig, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::nnet::AdamConfig;
use crate::signal::MfccConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub alpha: f64,
    pub beta: f64,
    /// Replaces `beta` when set; feature scales at desk size differ from
    /// the large-corpus setting `beta` was tuned for.
    pub beta_effective: Option<f64>,
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub chunk_frames: usize,
    pub chunks_per_batch: usize,
    pub adapt_epochs: usize,
    pub adapt_lr_factor: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            beta_effective: None,
            lr: 1e-3,
            lr_decay: 0.95,
            epochs: 6,
            chunk_frames: 150,
            chunks_per_batch: 8,
            adapt_epochs: 1,
            adapt_lr_factor: 0.25,
        }
    }
}

impl TrainSection {
    pub fn beta_used(&self) -> f64 {
        self.beta_effective.unwrap_or(self.beta)
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            beta: self.beta_used(),
            chunk_frames: self.chunk_frames,
            chunks_per_batch: self.chunks_per_batch,
            epochs: self.epochs,
            adam: AdamConfig {
                lr: self.lr,
                decay_per_epoch: self.lr_decay,
                ..AdamConfig::default()
            },
            adapt_lr_factor: self.adapt_lr_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSection {
    pub seeds: Vec<u64>,
    pub conditions: Vec<Condition>,
    pub aux_modes: Vec<AuxMode>,
    /// Pitch shifts applied to the adult test set.
    pub shift_cents: Vec<i32>,
    /// Aux modes whose models also get the adaptation arms.
    pub adapt_aux_modes: Vec<AuxMode>,
    pub gmm_iters: usize,
    /// Speed-perturb the adult training set to three times its size.
    pub triple_adult: bool,
}

impl Default for MatrixSection {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            conditions: vec![Condition::Baseline, Condition::Fdcae],
            aux_modes: AuxMode::ALL.to_vec(),
            shift_cents: vec![300, 400, 500],
            adapt_aux_modes: vec![AuxMode::Speaker],
            gmm_iters: 15,
            triple_adult: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub mfcc: MfccConfig,
    pub embed: EmbedConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub matrix: MatrixSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.feat_dim != self.mfcc.num_ceps {
            return Err(Error::Config(format!(
                "model.feat_dim {} != mfcc.num_ceps {}",
                self.model.feat_dim, self.mfcc.num_ceps
            )));
        }
        if self.matrix.seeds.is_empty() {
            return Err(Error::Config("matrix.seeds is empty".into()));
        }
        if self.train.chunk_frames == 0 || self.train.chunks_per_batch == 0 {
            return Err(Error::Config("chunk sizes must be positive".into()));
        }
        if !(self.train.beta_used() >= 0.0 && self.train.alpha >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}
