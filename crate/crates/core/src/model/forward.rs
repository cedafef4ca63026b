use std::collections::BTreeSet;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::corpus::{EncodedExample, PAD};
use crate::ndgrad::{sigmoid, BatchStats, Graph, Mode, NodeId, Tensor};
use crate::note_parser::Medication;

/// Per-note values of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    /// Dense-layer activations (latent factors).
    pub factors: Vec<f64>,
    /// Max-pooled filter outputs, banks concatenated in window order.
    pub pooled: Vec<f64>,
    /// Window start of each filter's maximum, in the same order as `pooled`.
    pub argmax: Vec<usize>,
}

/// Loss and gradients for one batch.
#[derive(Debug, Clone)]
pub struct Objective {
    /// Mean cross-entropy plus the L2 penalty.
    pub loss: f64,
    /// Mean cross-entropy alone.
    pub data_loss: f64,
    /// One gradient per trainable tensor, in [`ModelParams::trainable`] order.
    pub grads: Vec<Tensor>,
    /// Batch statistics of every batch-norm layer (conv banks, then dense);
    /// empty in inference mode.
    pub stats: Vec<BatchStats>,
}

struct Built {
    params: Vec<NodeId>,
    pools: Vec<NodeId>,
    starts: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    z: NodeId,
    x: NodeId,
    y: NodeId,
    stats: Vec<BatchStats>,
}

/// Generator handed to passes that never draw from it (dropout off).
fn idle_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Leading non-padding length.
fn valid_len(indices: &[usize]) -> usize {
    indices.iter().position(|&i| i == PAD).unwrap_or(indices.len())
}

impl ModelParams {
    fn build<'g, R: Rng + ?Sized>(
        &'g self,
        g: &mut Graph<'g>,
        batch: &[&[usize]],
        mode: Mode,
        keep_rate: f64,
        rng: &mut R,
    ) -> Result<Built, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let act = self.arch.activation;
        let need = self.arch.max_window();
        let params: Vec<NodeId> = self.trainable().into_iter().map(|t| g.param(t)).collect();
        let emb = params[0];

        let mut tokens = Vec::new();
        let mut offsets = Vec::with_capacity(batch.len());
        let mut lens = Vec::with_capacity(batch.len());
        for seq in batch {
            let len = valid_len(seq);
            if len < need {
                return Err(ModelError::SequenceTooShort { len, need });
            }
            offsets.push(tokens.len());
            lens.push(len);
            tokens.extend_from_slice(&seq[..len]);
        }
        let d = g.embed(emb, &tokens)?;

        let mut stats = Vec::new();
        let mut pools = Vec::with_capacity(self.banks.len());
        let mut all_starts = Vec::with_capacity(self.banks.len());
        for (bi, bank) in self.banks.iter().enumerate() {
            let base = 1 + 4 * bi;
            let n = bank.width;
            let mut starts = Vec::new();
            let mut segments: Vec<Range<usize>> = Vec::with_capacity(batch.len());
            for (&off, &len) in offsets.iter().zip(&lens) {
                let first = starts.len();
                starts.extend(off..=off + len - n);
                segments.push(first..starts.len());
            }
            let c = g.conv1d(d, params[base], params[base + 1], &starts, n)?;
            let (c, st) = g.batch_norm(c, params[base + 2], params[base + 3], &bank.norm, mode)?;
            stats.extend(st);
            let c = g.activation(c, act)?;
            pools.push(g.segment_max(c, &segments)?);
            all_starts.push(starts);
        }
        let z = g.concat_cols(&pools)?;
        let z_drop = g.dropout(z, keep_rate, mode, rng)?;

        let dense = 1 + 4 * self.banks.len();
        let u = g.matmul_nt(z_drop, params[dense])?;
        let u = g.add_row(u, params[dense + 1])?;
        let (u, st) = g.batch_norm(u, params[dense + 2], params[dense + 3], &self.dense_norm, mode)?;
        stats.extend(st);
        let x = g.activation(u, act)?;
        let y = g.matmul_nt(x, params[dense + 4])?;
        let y = g.add_row(y, params[dense + 5])?;
        Ok(Built {
            params,
            pools,
            starts: all_starts,
            offsets,
            z,
            x,
            y,
            stats,
        })
    }

    /// Forward pass over a batch of index sequences.
    ///
    /// Training mode needs at least two notes (batch statistics); inference
    /// mode uses the running statistics and works on any batch size.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        batch: &[&[usize]],
        mode: Mode,
        keep_rate: f64,
        rng: &mut R,
    ) -> Result<Vec<ForwardTrace>, ModelError> {
        let mut g = Graph::new();
        let b = self.build(&mut g, batch, mode, keep_rate, rng)?;
        let (z, x, y) = (g.value(b.z), g.value(b.x), g.value(b.y));
        let f = self.arch.filters_per_window;
        Ok((0..batch.len())
            .map(|i| {
                let mut argmax = Vec::with_capacity(z.cols());
                for (pool, starts) in b.pools.iter().zip(&b.starts) {
                    let rows = g.segment_argmax(*pool).expect("pool node");
                    argmax.extend(rows[i * f..(i + 1) * f].iter().map(|&r| starts[r] - b.offsets[i]));
                }
                let logits = y.row(i).to_vec();
                ForwardTrace {
                    probs: logits.iter().map(|&v| sigmoid(v)).collect(),
                    logits,
                    factors: x.row(i).to_vec(),
                    pooled: z.row(i).to_vec(),
                    argmax,
                }
            })
            .collect())
    }

    /// Inference-mode forward pass of one note.
    pub fn forward(&self, indices: &[usize]) -> Result<ForwardTrace, ModelError> {
        let mut rng = idle_rng();
        Ok(self.forward_batch(&[indices], Mode::Infer, 1.0, &mut rng)?.remove(0))
    }

    /// Inference-mode traces in chunks of `chunk` notes.
    pub fn infer_all(&self, examples: &[&[usize]], chunk: usize) -> Result<Vec<ForwardTrace>, ModelError> {
        let mut rng = idle_rng();
        let mut out = Vec::with_capacity(examples.len());
        for part in examples.chunks(chunk.max(1)) {
            out.extend(self.forward_batch(part, Mode::Infer, 1.0, &mut rng)?);
        }
        Ok(out)
    }

    /// Mean cross-entropy plus `l2/2 · Σ‖w‖²` and its gradients.
    pub fn objective<R: Rng + ?Sized>(
        &self,
        tokens: &[&[usize]],
        labels: &[Vec<f64>],
        mode: Mode,
        keep_rate: f64,
        l2: f64,
        rng: &mut R,
    ) -> Result<Objective, ModelError> {
        if labels.len() != tokens.len() {
            return Err(ModelError::InvalidConfig("one label row per note".into()));
        }
        let mut g = Graph::new();
        let b = self.build(&mut g, tokens, mode, keep_rate, rng)?;
        let flat: Vec<f64> = labels.iter().flatten().copied().collect();
        let bce = g.bce_with_logits(b.y, &flat)?;
        let mean = g.scale(bce, 1.0 / tokens.len() as f64)?;
        let data_loss = g.value(mean).item();
        let mut loss = mean;
        if l2 > 0.0 {
            for (&id, decay) in b.params.iter().zip(self.decay_mask()) {
                if decay {
                    let sq = g.sum_squares(id)?;
                    let pen = g.scale(sq, l2 / 2.0)?;
                    loss = g.add(loss, pen)?;
                }
            }
        }
        let mut grads = g.backward(loss)?;
        Ok(Objective {
            loss: g.value(loss).item(),
            data_loss,
            grads: b.params.iter().map(|&id| grads.take(id)).collect(),
            stats: b.stats,
        })
    }

    /// Deterministic batch loss: dropout off, batch-norm in `mode`.
    pub fn loss_batch(&self, batch: &[&EncodedExample], l2: f64, mode: Mode) -> Result<f64, ModelError> {
        let tokens: Vec<&[usize]> = batch.iter().map(|e| e.token_indices.as_slice()).collect();
        let labels: Vec<Vec<f64>> = batch.iter().map(|e| e.label_vector()).collect();
        let mut rng = idle_rng();
        Ok(self.objective(&tokens, &labels, mode, 1.0, l2, &mut rng)?.loss)
    }
}

/// Indicator vector of `p > 0.5`.
pub fn predict_labels(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > 0.5)).collect()
}

/// Medications whose probability exceeds 0.5.
pub fn predict(trace: &ForwardTrace) -> BTreeSet<Medication> {
    trace
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.5)
        .filter_map(|(i, _)| Medication::from_index(i))
        .collect()
}
