use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::predict_labels;
use super::{ForwardTrace, ModelError, ModelParams, TrainConfig};
use crate::corpus::{DatasetSplit, EncodedExample};
use crate::metrics::MetricsReport;
use crate::ndgrad::{adam_step, bce_with_logits, AdamState, Mode, NdError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of the batch-mean cross-entropy (dropout on).
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Inference-mode metrics and traces over `examples`.
pub fn evaluate_model(
    params: &ModelParams,
    examples: &[EncodedExample],
) -> Result<(MetricsReport, Vec<ForwardTrace>), ModelError> {
    let tokens: Vec<&[usize]> = examples.iter().map(|e| e.token_indices.as_slice()).collect();
    let traces = params.infer_all(&tokens, 256)?;
    let preds: Vec<Vec<u8>> = traces.iter().map(|t| predict_labels(&t.probs)).collect();
    let labels: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
    Ok((MetricsReport::evaluate(&preds, &labels), traces))
}

fn mean_bce(traces: &[ForwardTrace], examples: &[EncodedExample]) -> Result<f64, NdError> {
    if traces.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t, e) in traces.iter().zip(examples) {
        total += bce_with_logits(&t.logits, &e.label_vector())?;
    }
    Ok(total / traces.len() as f64)
}

/// Mini-batch Adam with validation-based model selection.
///
/// The kept parameters maximize validation macro-F1, ties broken by lower
/// validation loss; patience counts epochs without such an improvement.
pub fn train(
    split: &DatasetSplit<EncodedExample>,
    vocab_size: usize,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), ModelError> {
    train_with(split, vocab_size, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    split: &DatasetSplit<EncodedExample>,
    vocab_size: usize,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainHistory), ModelError> {
    config.validate()?;
    if split.train.len() < 2 {
        return Err(ModelError::TooFewExamples {
            need: 2,
            got: split.train.len(),
        });
    }
    let mut params = ModelParams::from_config(config, vocab_size);
    let mask = params.decay_mask();
    let mut adam = AdamState::new(params.trainable());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    let mut best = params.clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_macro_f1: f64::NEG_INFINITY,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let tokens: Vec<&[usize]> = chunk.iter().map(|&i| split.train[i].token_indices.as_slice()).collect();
            let labels: Vec<Vec<f64>> = chunk.iter().map(|&i| split.train[i].label_vector()).collect();
            let numeric = |source: NdError| ModelError::Numeric {
                epoch,
                batch: bi,
                source,
            };
            let obj = match params.objective(&tokens, &labels, Mode::Train, config.keep_rate, 0.0, &mut rng) {
                Err(ModelError::Nd(e)) => return Err(numeric(e)),
                other => other?,
            };
            let mut slots = params.trainable_mut();
            adam_step(&mut slots, &obj.grads, &mut adam, config.lr, config.l2, &mask).map_err(numeric)?;
            let mut stats = obj.stats.iter();
            for bank in &mut params.banks {
                bank.norm.update_running(stats.next().expect("one stats entry per bank"));
            }
            params.dense_norm.update_running(stats.next().expect("dense stats"));
            if !params.is_finite() {
                return Err(numeric(NdError::NonFinite("adam_step")));
            }
            loss_sum += obj.data_loss;
            batches += 1;
        }

        let (report, traces) = evaluate_model(&params, &split.validation)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss: mean_bce(&traces, &split.validation)?,
            val_macro_f1: report.macro_avg.f1,
            val_micro_f1: report.micro.f1,
        };
        on_epoch(&record);
        // ties on macro-F1 go to the lower validation loss
        let better = record.val_macro_f1 > history.best_val_macro_f1
            || (record.val_macro_f1 == history.best_val_macro_f1 && record.val_loss < history.best_val_loss);
        if better {
            history.best_val_macro_f1 = record.val_macro_f1;
            history.best_val_loss = record.val_loss;
            history.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.epochs.push(record);
        if since_best >= config.patience && epoch < config.max_epochs {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best, history))
}
