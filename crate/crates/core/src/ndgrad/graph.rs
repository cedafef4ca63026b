use std::borrow::Cow;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{bce_term, dropout_mask, sigmoid};
use super::tensor::{axpy, dot, matmul_into, matmul_nt_into, matmul_tn_into};
use super::{Activation, Mode, NdError, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Learnable scale/shift plus running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Exponential moving average of batch statistics.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let unbias = if stats.count > 1 {
            stats.count as f64 / (stats.count - 1) as f64
        } else {
            1.0
        };
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = (m * *r + (1.0 - m) * b * unbias).max(0.0);
        }
    }

    /// Inference-mode transform of one value of feature `j`.
    pub fn apply_infer(&self, j: usize, v: f64) -> f64 {
        let inv_std = 1.0 / (self.running_var.data()[j] + self.eps).sqrt();
        self.gamma.data()[j] * (v - self.running_mean.data()[j]) * inv_std + self.beta.data()[j]
    }
}

/// Per-feature batch mean and biased variance observed in a training forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Act(NodeId, Activation),
    Embed {
        table: NodeId,
        tokens: Vec<usize>,
    },
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        starts: Vec<usize>,
        width: usize,
    },
    SegmentMax {
        input: NodeId,
        argmax: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    Dropout {
        input: NodeId,
        mask: Vec<f64>,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    },
    Bce {
        logits: NodeId,
        labels: Vec<f64>,
    },
    SumSquares(NodeId),
    Sum(NodeId),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Tape of recorded operations. Parameters are borrowed, not copied.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar loss with respect to the leaves of a graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Option<Vec<usize>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a leaf, zero-filled when the leaf is not on a path to the loss.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match (&self.grads[id.0], &self.shapes[id.0]) {
            (Some(g), _) => g.clone(),
            (None, Some(shape)) => Tensor::zeros(shape),
            (None, None) => panic!("node {} is not a leaf", id.0),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        match self.grads[id.0].take() {
            Some(g) => g,
            None => Tensor::zeros(
                self.shapes[id.0]
                    .as_ref()
                    .unwrap_or_else(|| panic!("node {} is not a leaf", id.0)),
            ),
        }
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NdError {
    NdError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Learnable leaf borrowed from the caller.
    pub fn param(&mut self, t: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(t), true)
    }

    /// Learnable leaf owning its value.
    pub fn param_owned(&mut self, t: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(t), true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(t), false)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId], name: &'static str) -> Result<NodeId, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// `a[m×p] · b[p×q]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.rows() {
            return Err(mismatch("matmul", av, bv));
        }
        let (m, p, q) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * q];
        matmul_into(av.data(), bv.data(), &mut out, m, p, q);
        self.push(Tensor::from_vec(&[m, q], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    /// `a[m×p] · b[q×p]ᵀ`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.cols() {
            return Err(mismatch("matmul_nt", av, bv));
        }
        let (m, p, q) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * q];
        matmul_nt_into(av.data(), bv.data(), &mut out, m, p, q);
        self.push(Tensor::from_vec(&[m, q], out)?, Op::MatMulNt(a, b), &[a, b], "matmul_nt")
    }

    /// Adds a length-`f` vector to every row of an `n×f` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NdError> {
        let (av, rv) = (self.value(a), self.value(row));
        if av.ndim() != 2 || rv.len() != av.cols() {
            return Err(mismatch("add_row", av, rv));
        }
        let f = av.cols();
        let mut out = av.clone();
        for chunk in out.data_mut().chunks_mut(f) {
            for (o, r) in chunk.iter_mut().zip(rv.data()) {
                *o += r;
            }
        }
        self.push(out, Op::AddRow(a, row), &[a, row], "add_row")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av, bv));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, NdError> {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor), &[a], "scale")
    }

    pub fn activation(&mut self, a: NodeId, act: Activation) -> Result<NodeId, NdError> {
        let out = self.value(a).map(|v| act.apply(v));
        self.push(out, Op::Act(a, act), &[a], "activation")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NdError> {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, NdError> {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, NdError> {
        self.activation(a, Activation::Tanh)
    }

    /// Row gather: output row `i` is `table[tokens[i]]`.
    pub fn embed(&mut self, table: NodeId, tokens: &[usize]) -> Result<NodeId, NdError> {
        let tv = self.value(table);
        if tv.ndim() != 2 {
            return Err(mismatch("embed", tv, tv));
        }
        let (v, h) = (tv.rows(), tv.cols());
        let mut out = Vec::with_capacity(tokens.len() * h);
        for &t in tokens {
            if t >= v {
                return Err(NdError::ShapeMismatch {
                    op: "embed",
                    left: vec![v, h],
                    right: vec![t],
                });
            }
            out.extend_from_slice(tv.row(t));
        }
        let out = Tensor::from_vec(&[tokens.len(), h], out)?;
        self.push(
            out,
            Op::Embed {
                table,
                tokens: tokens.to_vec(),
            },
            &[table],
            "embed",
        )
    }

    /// Filter bank over row windows of `input[N×h]`.
    ///
    /// `weight` is `F×(width·h)`, each row a flattened `width×h` filter; `bias`
    /// has length `F`. Window `r` covers input rows `starts[r]..starts[r]+width`.
    /// Output is `R×F` with `R = starts.len()`.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        starts: &[usize],
        width: usize,
    ) -> Result<NodeId, NdError> {
        let (xv, wv, bv) = (self.value(input), self.value(weight), self.value(bias));
        if xv.ndim() != 2 || wv.ndim() != 2 || wv.cols() != width * xv.cols() || bv.len() != wv.rows() {
            return Err(mismatch("conv1d", xv, wv));
        }
        let (n_rows, h, f) = (xv.rows(), xv.cols(), wv.rows());
        let span = width * h;
        let mut out = Vec::with_capacity(starts.len() * f);
        for &s in starts {
            if s + width > n_rows {
                return Err(NdError::WindowTooLarge {
                    window: width,
                    rows: n_rows.saturating_sub(s),
                });
            }
            let window = &xv.data()[s * h..s * h + span];
            for j in 0..f {
                out.push(dot(window, &wv.data()[j * span..(j + 1) * span]) + bv.data()[j]);
            }
        }
        let out = Tensor::from_vec(&[starts.len(), f], out)?;
        self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                starts: starts.to_vec(),
                width,
            },
            &[input, weight, bias],
            "conv1d",
        )
    }

    /// Column-wise max over each row segment of `input[R×F]`, giving `segments.len()×F`.
    /// Ties resolve to the first row of the segment.
    pub fn segment_max(&mut self, input: NodeId, segments: &[Range<usize>]) -> Result<NodeId, NdError> {
        let xv = self.value(input);
        let f = xv.cols();
        let mut out = Vec::with_capacity(segments.len() * f);
        let mut argmax = Vec::with_capacity(segments.len() * f);
        for seg in segments {
            if seg.is_empty() || seg.end > xv.rows() {
                return Err(NdError::EmptyInput("segment_max"));
            }
            let mut best: Vec<f64> = xv.row(seg.start).to_vec();
            let mut arg = vec![seg.start; f];
            for r in seg.start + 1..seg.end {
                for (j, &v) in xv.row(r).iter().enumerate() {
                    if v > best[j] {
                        best[j] = v;
                        arg[j] = r;
                    }
                }
            }
            out.extend(best);
            argmax.extend(arg);
        }
        let out = Tensor::from_vec(&[segments.len(), f], out)?;
        self.push(out, Op::SegmentMax { input, argmax }, &[input], "segment_max")
    }

    /// Rows of the input selected by a [`Graph::segment_max`] node.
    pub fn segment_argmax(&self, id: NodeId) -> Option<&[usize]> {
        match &self.nodes[id.0].op {
            Op::SegmentMax { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NdError> {
        let first = self.value(*parts.first().ok_or(NdError::EmptyInput("concat_cols"))?);
        let rows = first.rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.ndim() != 2 || v.rows() != rows {
                return Err(mismatch("concat_cols", first, v));
            }
            total += v.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::from_vec(&[rows, total], out)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), parts, "concat_cols")
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: NodeId,
        keep_rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId, NdError> {
        let len = self.value(input).len();
        match dropout_mask(len, keep_rate, mode, rng)? {
            None => Ok(input),
            Some(mask) => {
                let xv = self.value(input);
                let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
                let out = Tensor::from_vec(xv.shape(), data)?;
                self.push(out, Op::Dropout { input, mask }, &[input], "dropout")
            }
        }
    }

    /// Per-column normalization of `input[N×f]`.
    ///
    /// Training mode normalizes with the batch statistics (returned so the
    /// caller can fold them into `norm`'s running averages); inference mode
    /// uses the running statistics stored in `norm`.
    pub fn batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        norm: &BatchNorm,
        mode: Mode,
    ) -> Result<(NodeId, Option<BatchStats>), NdError> {
        let (xv, gv, bv) = (self.value(input), self.value(gamma), self.value(beta));
        if xv.ndim() != 2 || gv.len() != xv.cols() || bv.len() != xv.cols() {
            return Err(mismatch("batch_norm", xv, gv));
        }
        let (n, f) = (xv.rows(), xv.cols());
        let (mean, var, training) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NdError::BatchTooSmall(n));
                }
                let mut mean = vec![0.0; f];
                for r in 0..n {
                    for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for r in 0..n {
                    for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var, true)
            }
            Mode::Infer => (
                norm.running_mean.data().to_vec(),
                norm.running_var.data().to_vec(),
                false,
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + norm.eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(n * f);
        let mut out = Vec::with_capacity(n * f);
        for r in 0..n {
            for (j, &v) in xv.row(r).iter().enumerate() {
                let z = (v - mean[j]) * inv_std[j];
                xhat.push(z);
                out.push(gv.data()[j] * z + bv.data()[j]);
            }
        }
        let out = Tensor::from_vec(&[n, f], out)?;
        let stats = training.then(|| BatchStats { mean, var, count: n });
        let id = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            &[input, gamma, beta],
            "batch_norm",
        )?;
        Ok((id, stats))
    }

    /// Summed sigmoid cross-entropy of `logits` against same-length `labels`.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: &[f64]) -> Result<NodeId, NdError> {
        let lv = self.value(logits);
        if lv.len() != labels.len() {
            return Err(NdError::ShapeMismatch {
                op: "bce_with_logits",
                left: lv.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let loss: f64 = lv.data().iter().zip(labels).map(|(&y, &l)| bce_term(y, l)).sum();
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                logits,
                labels: labels.to_vec(),
            },
            &[logits],
            "bce_with_logits",
        )
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId, NdError> {
        let s = self.value(a).squared_norm();
        self.push(Tensor::scalar(s), Op::SumSquares(a), &[a], "sum_squares")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, NdError> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    /// Reverse-mode sweep from a scalar node.
    ///
    /// Every node is visited once, in reverse creation order. Gradients are
    /// retained for leaves only.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NdError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NdError::NotScalarLoss(lv.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let shapes = self
            .nodes
            .iter()
            .map(|node| matches!(node.op, Op::Leaf).then(|| node.value.shape().to_vec()))
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node<'a>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, p, q) = (av.rows(), av.cols(), bv.cols());
                if let Some(buf) = self.grad_buf(grads, *a) {
                    matmul_nt_into(gd, bv.data(), buf, m, q, p);
                }
                if let Some(buf) = self.grad_buf(grads, *b) {
                    matmul_tn_into(av.data(), gd, buf, m, p, q);
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, p, q) = (av.rows(), av.cols(), bv.rows());
                if let Some(buf) = self.grad_buf(grads, *a) {
                    matmul_into(gd, bv.data(), buf, m, q, p);
                }
                if let Some(buf) = self.grad_buf(grads, *b) {
                    matmul_tn_into(gd, av.data(), buf, m, q, p);
                }
            }
            Op::AddRow(a, row) => {
                if let Some(buf) = self.grad_buf(grads, *a) {
                    axpy(1.0, gd, buf);
                }
                if let Some(buf) = self.grad_buf(grads, *row) {
                    let f = buf.len();
                    for chunk in gd.chunks(f) {
                        axpy(1.0, chunk, buf);
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if let Some(buf) = self.grad_buf(grads, *id) {
                        axpy(1.0, gd, buf);
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(buf) = self.grad_buf(grads, *a) {
                    axpy(*factor, gd, buf);
                }
            }
            Op::Act(a, act) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                if let Some(buf) = self.grad_buf(grads, *a) {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * act.derivative(x[i], y[i]);
                    }
                }
            }
            Op::Embed { table, tokens } => {
                let h = node.value.cols();
                if let Some(buf) = self.grad_buf(grads, *table) {
                    for (r, &t) in tokens.iter().enumerate() {
                        axpy(1.0, &gd[r * h..(r + 1) * h], &mut buf[t * h..(t + 1) * h]);
                    }
                }
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                starts,
                width,
            } => {
                let (xv, wv) = (self.value(*input), self.value(*weight));
                let h = xv.cols();
                let f = wv.rows();
                let span = width * h;
                if let Some(buf) = self.grad_buf(grads, *bias) {
                    for chunk in gd.chunks(f) {
                        axpy(1.0, chunk, buf);
                    }
                }
                if let Some(buf) = self.grad_buf(grads, *weight) {
                    for (r, &s) in starts.iter().enumerate() {
                        let window = &xv.data()[s * h..s * h + span];
                        for j in 0..f {
                            let gv = gd[r * f + j];
                            if gv != 0.0 {
                                axpy(gv, window, &mut buf[j * span..(j + 1) * span]);
                            }
                        }
                    }
                }
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for (r, &s) in starts.iter().enumerate() {
                        let target = &mut buf[s * h..s * h + span];
                        for j in 0..f {
                            let gv = gd[r * f + j];
                            if gv != 0.0 {
                                axpy(gv, &wv.data()[j * span..(j + 1) * span], target);
                            }
                        }
                    }
                }
            }
            Op::SegmentMax { input, argmax } => {
                let f = node.value.cols();
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for (idx, &row) in argmax.iter().enumerate() {
                        let j = idx % f;
                        buf[row * f + j] += gd[idx];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if let Some(buf) = self.grad_buf(grads, p) {
                        for (r, chunk) in buf.chunks_mut(pc).enumerate() {
                            axpy(1.0, &gd[r * total + offset..r * total + offset + pc], chunk);
                        }
                    }
                    offset += pc;
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * mask[i];
                    }
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let gamma_v = self.value(*gamma).data();
                let f = gamma_v.len();
                let n = gd.len() / f;
                if let Some(buf) = self.grad_buf(grads, *beta) {
                    for chunk in gd.chunks(f) {
                        axpy(1.0, chunk, buf);
                    }
                }
                if let Some(buf) = self.grad_buf(grads, *gamma) {
                    for (gc, xc) in gd.chunks(f).zip(xhat.chunks(f)) {
                        for j in 0..f {
                            buf[j] += gc[j] * xc[j];
                        }
                    }
                }
                if let Some(buf) = self.grad_buf(grads, *input) {
                    if *training {
                        // dx = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂)), dx̂ = g·γ
                        let mut sum_d = vec![0.0; f];
                        let mut sum_dx = vec![0.0; f];
                        for (gc, xc) in gd.chunks(f).zip(xhat.chunks(f)) {
                            for j in 0..f {
                                let d = gc[j] * gamma_v[j];
                                sum_d[j] += d;
                                sum_dx[j] += d * xc[j];
                            }
                        }
                        let nf = n as f64;
                        for r in 0..n {
                            for j in 0..f {
                                let i = r * f + j;
                                let d = gd[i] * gamma_v[j];
                                buf[i] += inv_std[j] / nf * (nf * d - sum_d[j] - xhat[i] * sum_dx[j]);
                            }
                        }
                    } else {
                        for r in 0..n {
                            for j in 0..f {
                                let i = r * f + j;
                                buf[i] += gd[i] * gamma_v[j] * inv_std[j];
                            }
                        }
                    }
                }
            }
            Op::Bce { logits, labels } => {
                let upstream = gd[0];
                let y = self.value(*logits).data();
                if let Some(buf) = self.grad_buf(grads, *logits) {
                    for i in 0..buf.len() {
                        buf[i] += upstream * (sigmoid(y[i]) - labels[i]);
                    }
                }
            }
            Op::SumSquares(a) => {
                let upstream = gd[0];
                let x = self.value(*a).data();
                if let Some(buf) = self.grad_buf(grads, *a) {
                    axpy(2.0 * upstream, x, buf);
                }
            }
            Op::Sum(a) => {
                let upstream = gd[0];
                if let Some(buf) = self.grad_buf(grads, *a) {
                    buf.iter_mut().for_each(|v| *v += upstream);
                }
            }
        }
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Tensor>], id: NodeId) -> Option<&'g mut [f64]> {
        if !self.nodes[id.0].requires_grad {
            return None;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[id.0].value.shape()));
        }
        slot.as_mut().map(|t| t.data_mut())
    }
}
