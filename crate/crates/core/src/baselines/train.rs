use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_sparse, BaselineConfig, BaselineError, Linear, LrParams, MlpParams};
use crate::corpus::{densify, DatasetSplit, EncodedExample};
use crate::ndgrad::{adam_step, bce_with_logits, AdamState, Graph, Tensor};
use crate::note_parser::NUM_MEDICATIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    /// Mean per-note cross-entropy over training batches.
    pub train_loss: f64,
    /// Mean per-note cross-entropy on the validation split.
    pub val_loss: f64,
    /// Validation cross-entropy of each medication's classifier.
    pub class_val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHistory {
    pub epochs: Vec<BaselineEpoch>,
    /// 1-based epoch kept for each medication (all equal for the MLP).
    pub best_epoch: Vec<usize>,
    pub stopped_early: bool,
}

/// Logistic regression per medication on TF-IDF vectors of width `dim`.
///
/// The eight classifiers share nothing but the batch order: each keeps the
/// epoch with its own lowest validation loss and stops on its own patience.
pub fn train_lr(
    split: &DatasetSplit<EncodedExample>,
    dim: usize,
    config: &BaselineConfig,
) -> Result<(LrParams, BaselineHistory), BaselineError> {
    for e in split.train.iter().chain(&split.validation) {
        check_sparse(&e.tfidf, dim)?;
    }
    let features = |e: &EncodedExample| densify(&e.tfidf, dim);
    let (mut layers, history) = fit(vec![Linear::zeros(dim, NUM_MEDICATIONS)], split, config, features, true)?;
    Ok((
        LrParams {
            linear: layers.remove(0),
        },
        history,
    ))
}

/// One-hidden-layer perceptron on admission-medication indicators.
pub fn train_mlp(
    split: &DatasetSplit<EncodedExample>,
    config: &BaselineConfig,
) -> Result<(MlpParams, BaselineHistory), BaselineError> {
    let first = split.train.first().ok_or(BaselineError::EmptySplit("training"))?;
    let inputs = first.admission_med_vector.len();
    for e in split.train.iter().chain(&split.validation) {
        if e.admission_med_vector.len() != inputs {
            return Err(BaselineError::FeatureDim {
                expected: inputs,
                got: e.admission_med_vector.len(),
            });
        }
    }
    config.validate()?;
    let init = MlpParams::init(inputs, config)?;
    let features = |e: &EncodedExample| e.admission_med_vector.iter().map(|&b| f64::from(b)).collect();
    let (mut layers, history) = fit(vec![init.hidden, init.output], split, config, features, false)?;
    let output = layers.pop().expect("two layers");
    let hidden = layers.pop().expect("two layers");
    Ok((MlpParams { hidden, output }, history))
}

/// Stack of linear layers with relu between them, evaluated on a dense row.
fn forward_row(layers: &[Linear], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        h = l.apply(&h);
        if i + 1 < layers.len() {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    h
}

/// Mean batch cross-entropy and its gradients (weight, bias per layer).
fn batch_objective(layers: &[Linear], x: Tensor, labels: &[f64]) -> Result<(f64, Vec<Tensor>), BaselineError> {
    let rows = x.rows();
    let mut g = Graph::new();
    let ids: Vec<_> = layers.iter().flat_map(|l| [&l.weight, &l.bias]).map(|t| g.param(t)).collect();
    let mut h = g.constant(x);
    for (i, pair) in ids.chunks(2).enumerate() {
        h = g.matmul_nt(h, pair[0])?;
        h = g.add_row(h, pair[1])?;
        if i + 1 < layers.len() {
            h = g.relu(h)?;
        }
    }
    let bce = g.bce_with_logits(h, labels)?;
    let loss = g.scale(bce, 1.0 / rows as f64)?;
    let mut grads = g.backward(loss)?;
    Ok((g.value(loss).item(), ids.iter().map(|&id| grads.take(id)).collect()))
}

fn fit(
    mut layers: Vec<Linear>,
    split: &DatasetSplit<EncodedExample>,
    config: &BaselineConfig,
    features: impl Fn(&EncodedExample) -> Vec<f64>,
    per_class: bool,
) -> Result<(Vec<Linear>, BaselineHistory), BaselineError> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(BaselineError::EmptySplit("training"));
    }
    if split.validation.is_empty() {
        return Err(BaselineError::EmptySplit("validation"));
    }
    let k = NUM_MEDICATIONS;
    let width = layers[0].inputs();
    let mask: Vec<bool> = layers.iter().flat_map(|_| [true, false]).collect();
    let mut adam = AdamState::new(layers.iter().flat_map(|l| [&l.weight, &l.bias]));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let val_x: Vec<Vec<f64>> = split.validation.iter().map(&features).collect();

    let mut best = layers.clone();
    let mut best_loss = vec![f64::INFINITY; k];
    let mut best_total = f64::INFINITY;
    let mut since = vec![0usize; k];
    let mut history = BaselineHistory {
        epochs: Vec::new(),
        best_epoch: vec![0; k],
        stopped_early: false,
    };

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * width);
            let mut y = Vec::with_capacity(chunk.len() * k);
            for &i in chunk {
                x.extend(features(&split.train[i]));
                y.extend(split.train[i].label_vector());
            }
            let x = Tensor::from_vec(&[chunk.len(), width], x)?;
            let (loss, grads) = batch_objective(&layers, x, &y)?;
            let mut slots: Vec<&mut Tensor> = layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect();
            adam_step(&mut slots, &grads, &mut adam, config.lr, config.l2, &mask)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }

        let mut class_loss = vec![0.0; k];
        for (x, e) in val_x.iter().zip(&split.validation) {
            let logits = forward_row(&layers, x);
            for c in 0..k {
                class_loss[c] += bce_with_logits(&logits[c..=c], &[f64::from(e.labels[c])])?;
            }
        }
        let n_val = split.validation.len() as f64;
        class_loss.iter_mut().for_each(|v| *v /= n_val);
        let total: f64 = class_loss.iter().sum();

        if per_class {
            // single linear layer: classifier c is row c of the weight and entry c of the bias
            for c in 0..k {
                if since[c] >= config.patience {
                    continue;
                }
                if class_loss[c] < best_loss[c] {
                    best_loss[c] = class_loss[c];
                    history.best_epoch[c] = epoch;
                    since[c] = 0;
                    best[0].weight.row_mut(c).copy_from_slice(layers[0].weight.row(c));
                    best[0].bias.data_mut()[c] = layers[0].bias.data()[c];
                } else {
                    since[c] += 1;
                }
            }
        } else if total < best_total {
            best_total = total;
            history.best_epoch = vec![epoch; k];
            best = layers.clone();
            since = vec![0; k];
        } else {
            since.iter_mut().for_each(|s| *s += 1);
        }

        history.epochs.push(BaselineEpoch {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss: total,
            class_val_loss: class_loss,
        });
        if since.iter().all(|&s| s >= config.patience) {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    Ok((best, history))
}
