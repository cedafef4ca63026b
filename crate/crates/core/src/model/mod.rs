//! Text CNN with a factor-analysis output head.
//!
//! Pipeline per note: embedding lookup, one filter bank per window width
//! (convolution, batch norm, activation, max over positions), concatenation,
//! dropout, a dense layer of latent factors `x` (batch norm, activation), then
//! logits `y = μ + Λx` and probabilities `σ(y)`.

mod covariance;
mod forward;
mod params;
mod train;


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndgrad::{Activation, NdError};
use crate::note_parser::NUM_MEDICATIONS;

pub use covariance::{covariance_from_factors, empirical_covariance, medication_covariance, CovSource, CovarianceReport};
pub use forward::{predict, predict_labels, ForwardTrace, Objective};
pub use params::{Architecture, FilterBank, ModelParams, ParamInfo};
pub use train::{evaluate_model, train, train_with, EpochRecord, TrainHistory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("note has {len} tokens but the widest filter needs {need}")]
    SequenceTooShort { len: usize, need: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("need at least {need} examples, got {got}")]
    TooFewExamples { need: usize, got: usize },
    #[error("numeric failure at epoch {epoch}, batch {batch}: {source}")]
    Numeric { epoch: usize, batch: usize, source: NdError },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint does not describe a model: {0}")]
    BadCheckpoint(String),
}

/// Architecture and optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub dense_units: usize,
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    pub lr: f64,
    pub keep_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub activation: Activation,
    /// Half-width of the uniform initialization range.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            dense_units: 64,
            windows: vec![3, 4, 5],
            filters_per_window: 64,
            lr: 0.01,
            keep_rate: 0.3,
            l2: 0.1,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            activation: Activation::Relu,
            init_scale: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self, vocab_size: usize) -> Architecture {
        Architecture {
            vocab_size,
            embed_dim: self.embed_dim,
            windows: self.windows.clone(),
            filters_per_window: self.filters_per_window,
            dense_units: self.dense_units,
            num_labels: NUM_MEDICATIONS,
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.windows.is_empty() || self.windows.contains(&0) {
            return bad("windows must be non-empty and positive");
        }
        if self.embed_dim == 0 || self.dense_units == 0 || self.filters_per_window == 0 {
            return bad("layer sizes must be positive");
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return bad("keep_rate must lie in (0, 1]");
        }
        if !(self.lr > 0.0) || !(self.l2 >= 0.0) || !(self.init_scale >= 0.0) {
            return bad("lr must be positive, l2 and init_scale non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        Ok(())
    }
}
