//! Minimal dense-tensor core with reverse-mode automatic differentiation.
//!
//! A [`Graph`] records operations on [`Tensor`] values as they are evaluated
//! (define-by-run). Calling [`Graph::backward`] on a scalar node walks the tape
//! in reverse creation order, which is a valid reverse topological order, and
//! accumulates gradients for every node that depends on a parameter leaf.
//!
//! The layer set is exactly what the text CNN needs: embedding lookup, 1-D
//! convolution over token windows, segment max pooling, concatenation,
//! dropout, batch normalization, dense products and a numerically stable
//! sigmoid cross-entropy. Standalone versions of the primitives (no tape) live
//! in [`ops`] and double as references for tests.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{BatchNorm, BatchStats, Gradients, Graph, NodeId};
pub use ops::{bce_with_logits, conv_window, dropout, max_pool, sigmoid};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("window of {window} rows does not fit input of {rows} rows")]
    WindowTooLarge { window: usize, rows: usize },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("keep rate {0} outside (0, 1]")]
    InvalidRate(f64),
    #[error("batch normalization needs at least 2 rows in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("backward needs a scalar loss, node has shape {0:?}")]
    NotScalarLoss(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Elementwise nonlinearity applied after convolution and dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the input `x` and output `y = f(x)`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Training enables dropout and batch statistics; inference uses running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
