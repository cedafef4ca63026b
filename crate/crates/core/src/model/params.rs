use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TrainConfig};
use crate::ndgrad::{Activation, BatchNorm, Checkpoint, NamedTensor, Tensor};

/// Shape of the network; everything needed to rebuild empty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    pub dense_units: usize,
    pub num_labels: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn total_filters(&self) -> usize {
        self.windows.len() * self.filters_per_window
    }

    pub fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(0)
    }
}

/// Filters of one window width. Row `j` of `weight` is filter `j` flattened
/// row-major from `width × embed_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub width: usize,
    pub weight: Tensor,
    pub bias: Tensor,
    pub norm: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    /// `vocab × embed_dim`.
    pub embedding: Tensor,
    pub banks: Vec<FilterBank>,
    /// `dense_units × total_filters`.
    pub dense_weight: Tensor,
    pub dense_bias: Tensor,
    pub dense_norm: BatchNorm,
    /// `num_labels × dense_units`.
    pub loading: Tensor,
    pub offset: Tensor,
}

/// Name and regularization flag of one trainable tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    /// Receives L2 decay; false for biases, the offset and batch-norm shifts/scales.
    pub decay: bool,
}

impl ModelParams {
    /// All-zero weights; batch-norm scale 1 and shift 0.
    pub fn zeros(arch: &Architecture) -> Self {
        let h = arch.embed_dim;
        let f = arch.filters_per_window;
        Self {
            embedding: Tensor::zeros(&[arch.vocab_size, h]),
            banks: arch
                .windows
                .iter()
                .map(|&n| FilterBank {
                    width: n,
                    weight: Tensor::zeros(&[f, n * h]),
                    bias: Tensor::zeros(&[f]),
                    norm: BatchNorm::new(f),
                })
                .collect(),
            dense_weight: Tensor::zeros(&[arch.dense_units, arch.total_filters()]),
            dense_bias: Tensor::zeros(&[arch.dense_units]),
            dense_norm: BatchNorm::new(arch.dense_units),
            loading: Tensor::zeros(&[arch.num_labels, arch.dense_units]),
            offset: Tensor::zeros(&[arch.num_labels]),
            arch: arch.clone(),
        }
    }

    /// Weights uniform in `[-scale, scale]`; biases and offset zero.
    pub fn init(arch: &Architecture, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        p.embedding = Tensor::uniform(p.embedding.shape(), -scale, scale, &mut rng);
        for bank in &mut p.banks {
            bank.weight = Tensor::uniform(bank.weight.shape(), -scale, scale, &mut rng);
        }
        p.dense_weight = Tensor::uniform(p.dense_weight.shape(), -scale, scale, &mut rng);
        p.loading = Tensor::uniform(p.loading.shape(), -scale, scale, &mut rng);
        p
    }

    pub fn from_config(config: &TrainConfig, vocab_size: usize) -> Self {
        Self::init(&config.architecture(vocab_size), config.init_scale, config.seed)
    }

    /// Trainable tensors in a fixed order shared by [`Self::trainable_mut`]
    /// and [`Self::set_trainable`].
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embedding];
        for b in &self.banks {
            out.extend([&b.weight, &b.bias, &b.norm.gamma, &b.norm.beta]);
        }
        out.extend([
            &self.dense_weight,
            &self.dense_bias,
            &self.dense_norm.gamma,
            &self.dense_norm.beta,
            &self.loading,
            &self.offset,
        ]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        for b in &mut self.banks {
            out.extend([&mut b.weight, &mut b.bias, &mut b.norm.gamma, &mut b.norm.beta]);
        }
        out.extend([
            &mut self.dense_weight,
            &mut self.dense_bias,
            &mut self.dense_norm.gamma,
            &mut self.dense_norm.beta,
            &mut self.loading,
            &mut self.offset,
        ]);
        out
    }

    pub fn param_info(&self) -> Vec<ParamInfo> {
        let info = |name: String, decay: bool| ParamInfo { name, decay };
        let mut out = vec![info("embedding".into(), true)];
        for b in &self.banks {
            let n = b.width;
            out.extend([
                info(format!("conv{n}.weight"), true),
                info(format!("conv{n}.bias"), false),
                info(format!("conv{n}.bn_scale"), false),
                info(format!("conv{n}.bn_shift"), false),
            ]);
        }
        out.extend([
            info("dense.weight".into(), true),
            info("dense.bias".into(), false),
            info("dense.bn_scale".into(), false),
            info("dense.bn_shift".into(), false),
            info("loading".into(), true),
            info("offset".into(), false),
        ]);
        out
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        self.param_info().into_iter().map(|p| p.decay).collect()
    }

    /// Replaces every trainable tensor; shapes must match.
    pub fn set_trainable(&mut self, values: &[Tensor]) -> Result<(), ModelError> {
        let slots = self.trainable_mut();
        if slots.len() != values.len() {
            return Err(ModelError::BadCheckpoint(format!("expected {} tensors, got {}", slots.len(), values.len())));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(ModelError::BadCheckpoint(format!("shape {:?} vs {:?}", slot.shape(), v.shape())));
            }
            *slot = v.clone();
        }
        Ok(())
    }

    /// `Σ‖w‖²` over the decayed tensors.
    pub fn decayed_squared_norm(&self) -> f64 {
        self.trainable()
            .into_iter()
            .zip(self.decay_mask())
            .filter(|(_, d)| *d)
            .map(|(t, _)| t.squared_norm())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().into_iter().all(Tensor::is_finite) && self.running_stats().iter().all(|(_, t)| t.is_finite())
    }

    fn running_stats(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for b in &self.banks {
            out.push((format!("conv{}.bn_mean", b.width), &b.norm.running_mean));
            out.push((format!("conv{}.bn_var", b.width), &b.norm.running_var));
        }
        out.push(("dense.bn_mean".into(), &self.dense_norm.running_mean));
        out.push(("dense.bn_var".into(), &self.dense_norm.running_var));
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<NamedTensor> = self
            .param_info()
            .into_iter()
            .zip(self.trainable())
            .map(|(info, t)| NamedTensor {
                name: info.name,
                tensor: t.clone(),
            })
            .collect();
        tensors.extend(self.running_stats().into_iter().map(|(name, t)| NamedTensor { name, tensor: t.clone() }));
        Checkpoint {
            kind: "cnn".into(),
            tensors,
            meta: serde_json::to_value(&self.arch).expect("architecture serializes"),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        if ckpt.kind != "cnn" {
            return Err(ModelError::BadCheckpoint(format!("kind `{}`", ckpt.kind)));
        }
        let arch: Architecture =
            serde_json::from_value(ckpt.meta.clone()).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        let mut p = Self::zeros(&arch);
        let get = |name: &str| {
            ckpt.get(name)
                .cloned()
                .ok_or_else(|| ModelError::BadCheckpoint(format!("missing tensor `{name}`")))
        };
        let values = p
            .param_info()
            .iter()
            .map(|info| get(&info.name))
            .collect::<Result<Vec<_>, _>>()?;
        p.set_trainable(&values)?;
        let stats: Vec<(String, Tensor)> = p
            .running_stats()
            .into_iter()
            .map(|(name, _)| get(&name).map(|t| (name, t)))
            .collect::<Result<_, _>>()?;
        let mut it = stats.into_iter().map(|(_, t)| t);
        for b in &mut p.banks {
            b.norm.running_mean = it.next().expect("mean");
            b.norm.running_var = it.next().expect("var");
        }
        p.dense_norm.running_mean = it.next().expect("mean");
        p.dense_norm.running_var = it.next().expect("var");
        let shapes_ok = p.banks.iter().all(|b| b.norm.running_mean.len() == b.norm.features() && b.norm.running_var.len() == b.norm.features())
            && p.dense_norm.running_mean.len() == p.dense_norm.features()
            && p.dense_norm.running_var.len() == p.dense_norm.features();
        if !shapes_ok {
            return Err(ModelError::BadCheckpoint("running statistics have the wrong length".into()));
        }
        Ok(p)
    }
}
