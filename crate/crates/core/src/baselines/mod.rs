//! Comparison models: per-medication logistic regression on TF-IDF vectors,
//! and a one-hidden-layer perceptron on admission-medication indicators.
//!
//! Both train on the autodiff graph with the same Adam step as the CNN, and
//! share the 0.5 decision threshold.

mod train;

#[cfg(test)]
mod tests;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EncodedExample, SparseVector};
use crate::model::predict_labels;
use crate::ndgrad::checkpoint::{Checkpoint, NamedTensor};
use crate::ndgrad::{sigmoid, NdError, Tensor};
use crate::note_parser::{Medication, NUM_MEDICATIONS};

pub use train::{train_lr, train_mlp, BaselineEpoch, BaselineHistory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error("split has no {0} examples")]
    EmptySplit(&'static str),
    #[error("feature index {index} outside dimension {dim}")]
    FeatureOutOfRange { index: usize, dim: usize },
    #[error("expected {expected} input features, got {got}")]
    FeatureDim { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint does not describe a baseline: {0}")]
    BadCheckpoint(String),
}

/// Optimization settings shared by both baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub lr: f64,
    /// Coefficient of the `l2/2·‖W‖²` penalty on weight matrices (biases exempt).
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// MLP hidden width (ignored by LR).
    pub hidden: usize,
    /// MLP only: start the hidden layer at the identity (needs `hidden` equal
    /// to the input width) instead of small uniform weights.
    pub identity_init: bool,
    pub init_scale: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            l2: 1.0,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            hidden: 32,
            identity_init: false,
            init_scale: 0.1,
        }
    }
}

impl BaselineConfig {
    /// Defaults for the MLP: no weight penalty.
    pub fn mlp() -> Self {
        Self {
            l2: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0) || !(self.l2 >= 0.0) || !(self.init_scale >= 0.0) {
            return bad("lr must be positive, l2 and init_scale non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden == 0 {
            return bad("batch_size, max_epochs and hidden must be positive");
        }
        Ok(())
    }
}

/// Affine map `W·x + b` with `W` stored `out×in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|o| {
                let w = self.weight.row(o);
                self.bias.data()[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Same as [`Linear::apply`] on a sparse input.
    pub fn apply_sparse(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.outputs())
            .map(|o| self.bias.data()[o] + x.iter().map(|&(j, v)| self.weight.get2(o, j) * v).sum::<f64>())
            .collect()
    }
}

/// Eight independent logistic regressions over TF-IDF features.
#[derive(Debug, Clone, PartialEq)]
pub struct LrParams {
    pub linear: Linear,
}

impl LrParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            linear: Linear::zeros(dim, NUM_MEDICATIONS),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.inputs()
    }

    pub fn logits(&self, tfidf: &SparseVector) -> Result<Vec<f64>, BaselineError> {
        check_sparse(tfidf, self.dim())?;
        Ok(self.linear.apply_sparse(tfidf))
    }

    pub fn probs(&self, tfidf: &SparseVector) -> Result<Vec<f64>, BaselineError> {
        Ok(self.logits(tfidf)?.into_iter().map(sigmoid).collect())
    }
}

/// Admission indicators → relu hidden layer → eight logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: Linear,
    pub output: Linear,
}

impl MlpParams {
    pub fn init(inputs: usize, config: &BaselineConfig) -> Result<Self, BaselineError> {
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = config.init_scale;
        let hidden = if config.identity_init {
            if h != inputs {
                return Err(BaselineError::InvalidConfig(format!(
                    "identity init needs hidden = inputs ({inputs}), got {h}"
                )));
            }
            Linear {
                weight: Tensor::identity(inputs),
                bias: Tensor::zeros(&[h]),
            }
        } else {
            Linear {
                weight: Tensor::uniform(&[h, inputs], -a, a, &mut rng),
                bias: Tensor::zeros(&[h]),
            }
        };
        let output = Linear {
            weight: Tensor::uniform(&[NUM_MEDICATIONS, h], -a, a, &mut rng),
            bias: Tensor::zeros(&[NUM_MEDICATIONS]),
        };
        Ok(Self { hidden, output })
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn logits(&self, admission: &[u8]) -> Result<Vec<f64>, BaselineError> {
        if admission.len() != self.inputs() {
            return Err(BaselineError::FeatureDim {
                expected: self.inputs(),
                got: admission.len(),
            });
        }
        let x: Vec<f64> = admission.iter().map(|&b| f64::from(b)).collect();
        let h: Vec<f64> = self.hidden.apply(&x).into_iter().map(|v| v.max(0.0)).collect();
        Ok(self.output.apply(&h))
    }

    pub fn probs(&self, admission: &[u8]) -> Result<Vec<f64>, BaselineError> {
        Ok(self.logits(admission)?.into_iter().map(sigmoid).collect())
    }
}

/// A trained comparison model.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineParams {
    Lr(LrParams),
    Mlp(MlpParams),
}

impl BaselineParams {
    /// Checkpoint kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lr(_) => "lr",
            Self::Mlp(_) => "mlp",
        }
    }

    /// Probabilities from whichever feature view the model uses.
    pub fn probs(&self, example: &EncodedExample) -> Result<Vec<f64>, BaselineError> {
        match self {
            Self::Lr(p) => p.probs(&example.tfidf),
            Self::Mlp(p) => p.probs(&example.admission_med_vector),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let named = |name: &str, t: &Tensor| NamedTensor {
            name: name.into(),
            tensor: t.clone(),
        };
        match self {
            Self::Lr(p) => Checkpoint {
                kind: "lr".into(),
                tensors: vec![named("lr.weight", &p.linear.weight), named("lr.bias", &p.linear.bias)],
                meta: serde_json::json!({ "dim": p.dim() }),
            },
            Self::Mlp(p) => Checkpoint {
                kind: "mlp".into(),
                tensors: vec![
                    named("mlp.hidden.weight", &p.hidden.weight),
                    named("mlp.hidden.bias", &p.hidden.bias),
                    named("mlp.output.weight", &p.output.weight),
                    named("mlp.output.bias", &p.output.bias),
                ],
                meta: serde_json::json!({ "inputs": p.inputs(), "hidden": p.hidden.outputs() }),
            },
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, BaselineError> {
        let get = |name: &str, shape: &[usize]| -> Result<Tensor, BaselineError> {
            let t = ckpt
                .get(name)
                .ok_or_else(|| BaselineError::BadCheckpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape {
                return Err(BaselineError::BadCheckpoint(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        let meta_usize = |key: &str| {
            ckpt.meta
                .get(key)
                .and_then(serde_json::Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| BaselineError::BadCheckpoint(format!("meta field `{key}` missing")))
        };
        let k = NUM_MEDICATIONS;
        match ckpt.kind.as_str() {
            "lr" => {
                let d = meta_usize("dim")?;
                Ok(Self::Lr(LrParams {
                    linear: Linear {
                        weight: get("lr.weight", &[k, d])?,
                        bias: get("lr.bias", &[k])?,
                    },
                }))
            }
            "mlp" => {
                let (n, h) = (meta_usize("inputs")?, meta_usize("hidden")?);
                Ok(Self::Mlp(MlpParams {
                    hidden: Linear {
                        weight: get("mlp.hidden.weight", &[h, n])?,
                        bias: get("mlp.hidden.bias", &[h])?,
                    },
                    output: Linear {
                        weight: get("mlp.output.weight", &[k, h])?,
                        bias: get("mlp.output.bias", &[k])?,
                    },
                }))
            }
            other => Err(BaselineError::BadCheckpoint(format!("kind `{other}`"))),
        }
    }
}

/// Medications whose baseline probability exceeds 0.5.
pub fn predict_baseline(params: &BaselineParams, example: &EncodedExample) -> Result<BTreeSet<Medication>, BaselineError> {
    let probs = params.probs(example)?;
    Ok(predict_labels(&probs)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .filter_map(|(i, _)| Medication::from_index(i))
        .collect())
}

fn check_sparse(x: &SparseVector, dim: usize) -> Result<(), BaselineError> {
    match x.iter().find(|&&(j, _)| j >= dim) {
        Some(&(index, _)) => Err(BaselineError::FeatureOutOfRange { index, dim }),
        None => Ok(()),
    }
}
