//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] borrows a [`ParamSet`] immutably and records every primitive
//! applied to parameters and constants. Nodes are appended in evaluation order,
//! so the node list is already a topological order; [`Tape::backward`] walks it
//! in reverse, visiting each node once.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::array::gemm;
use super::{Array, Gradients, ParamId, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

enum Value {
    Owned(Array),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    SliceCols {
        a: NodeId,
        start: usize,
    },
    SelectRows {
        mask: Vec<bool>,
        a: NodeId,
        b: NodeId,
    },
    StackSteps(Vec<NodeId>),
    AttnScores {
        query: NodeId,
        keys: NodeId,
        steps: usize,
    },
    AttnContext {
        weights: NodeId,
        values: NodeId,
        steps: usize,
    },
    GatherCols {
        a: NodeId,
        idx: Vec<usize>,
    },
    WeightedSum {
        a: NodeId,
        weights: Array,
    },
    SumAll(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Array,
    },
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        layout: ConvLayout,
    },
    MaxOverTime {
        a: NodeId,
        argmax: Vec<usize>,
    },
}

/// Geometry of a batched 1-D convolution over padded token rows.
#[derive(Clone, Debug)]
struct ConvLayout {
    /// Padded length of every sequence in the input rows.
    padded_len: usize,
    width: usize,
    /// Window start offsets `(batch, start)`, one per output row.
    windows: Vec<(usize, usize)>,
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation over a borrowed parameter set.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        match &self.nodes[id.0].value {
            Value::Owned(a) => a,
            Value::Param(p) => self.params.get(*p),
        }
    }

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf for a parameter. Repeated calls return the same node so that all
    /// uses share one gradient slot.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols(), vb.rows(), "matmul inner dimension");
        let mut out = Array::zeros(va.rows(), vb.cols());
        gemm(1.0, va, false, vb, false, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Array {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shapes");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Array::from_vec(va.rows(), va.cols(), data).expect("shape")
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Array {
        let va = self.value(a);
        let data = va.data().iter().map(|x| f(*x)).collect();
        Array::from_vec(va.rows(), va.cols(), data).expect("shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.shape(), (1, va.cols()), "add_row shape");
        let mut out = va.clone();
        let r = vr.data();
        for i in 0..out.rows() {
            for (x, y) in out.row_mut(i).iter_mut().zip(r) {
                *x += *y;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// Scales row `i` of an `m x n` matrix by entry `i` of an `m x 1` column.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (va, vc) = (self.value(a), self.value(col));
        assert_eq!(vc.shape(), (va.rows(), 1), "mul_col shape");
        let mut out = va.clone();
        for i in 0..out.rows() {
            let s = vc.data()[i];
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(&[a, col]);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = self.map(a, |x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Adds a constant array; the constant receives no gradient.
    pub fn add_const(&mut self, a: NodeId, c: &Array) -> NodeId {
        let k = self.constant(c.clone());
        self.add(a, k)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, Float::tanh);
        let rg = self.rg(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            log_softmax_in_place(out.row_mut(i));
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// Gathers rows `ids` of a `|V| x E` table into a `len(ids) x E` matrix.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let vt = self.value(table);
        let mut out = Array::zeros(ids.len(), vt.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(vt.row(id));
        }
        let rg = self.rg(&[table]);
        self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Array::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.rows(), rows, "concat_cols rows");
            for i in 0..rows {
                out.row_mut(i)[off..off + v.cols()].copy_from_slice(v.row(i));
            }
            off += v.cols();
        }
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let va = self.value(a);
        assert!(start + len <= va.cols(), "slice_cols range");
        let mut out = Array::zeros(va.rows(), len);
        for i in 0..va.rows() {
            out.row_mut(i).copy_from_slice(&va.row(i)[start..start + len]);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceCols { a, start }, rg)
    }

    /// Row `i` comes from `a` where `mask[i]` and from `b` otherwise.
    pub fn select_rows(&mut self, mask: &[bool], a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "select_rows shapes");
        assert_eq!(mask.len(), va.rows(), "select_rows mask");
        let mut out = vb.clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(i).copy_from_slice(va.row(i));
            }
        }
        let rg = self.rg(&[a, b]);
        self.push(
            out,
            Op::SelectRows {
                mask: mask.to_vec(),
                a,
                b,
            },
            rg,
        )
    }

    /// Interleaves `T` matrices of shape `B x H` into `(B*T) x H` with row
    /// `b*T + t` taken from step `t`.
    pub fn stack_steps(&mut self, steps: &[NodeId]) -> NodeId {
        let t_len = steps.len();
        let (b, h) = self.value(steps[0]).shape();
        let mut out = Array::zeros(b * t_len, h);
        for (t, s) in steps.iter().enumerate() {
            let v = self.value(*s);
            assert_eq!(v.shape(), (b, h), "stack_steps shapes");
            for i in 0..b {
                out.row_mut(i * t_len + t).copy_from_slice(v.row(i));
            }
        }
        let rg = self.rg(steps);
        self.push(out, Op::StackSteps(steps.to_vec()), rg)
    }

    /// Per-row dot products of a `B x H` query against `T` keys per row stored
    /// as `(B*T) x H`; result is `B x T`.
    pub fn attn_scores(&mut self, query: NodeId, keys: NodeId, steps: usize) -> NodeId {
        let (vq, vk) = (self.value(query), self.value(keys));
        let (b, h) = vq.shape();
        assert_eq!(vk.shape(), (b * steps, h), "attn_scores shapes");
        let mut out = Array::zeros(b, steps);
        for i in 0..b {
            let q = vq.row(i);
            for t in 0..steps {
                out.set(i, t, dot(q, vk.row(i * steps + t)));
            }
        }
        let rg = self.rg(&[query, keys]);
        self.push(out, Op::AttnScores { query, keys, steps }, rg)
    }

    /// Weighted sum of `T` value rows per batch row; `B x T` weights against
    /// `(B*T) x H` values gives `B x H`.
    pub fn attn_context(&mut self, weights: NodeId, values: NodeId, steps: usize) -> NodeId {
        let (vw, vv) = (self.value(weights), self.value(values));
        let b = vw.rows();
        let h = vv.cols();
        assert_eq!(vw.cols(), steps, "attn_context weights");
        assert_eq!(vv.rows(), b * steps, "attn_context values");
        let mut out = Array::zeros(b, h);
        for i in 0..b {
            let o = &mut out.data_mut()[i * h..(i + 1) * h];
            for t in 0..steps {
                let w = vw.get(i, t);
                if w != 0.0 {
                    axpy(w, vv.row(i * steps + t), o);
                }
            }
        }
        let rg = self.rg(&[weights, values]);
        self.push(
            out,
            Op::AttnContext {
                weights,
                values,
                steps,
            },
            rg,
        )
    }

    /// Picks column `idx[i]` from row `i`; result is a column vector.
    pub fn gather_cols(&mut self, a: NodeId, idx: &[usize]) -> NodeId {
        let va = self.value(a);
        assert_eq!(idx.len(), va.rows(), "gather_cols index count");
        let data = idx.iter().enumerate().map(|(i, &j)| va.get(i, j)).collect();
        let out = Array::from_vec(idx.len(), 1, data).expect("shape");
        let rg = self.rg(&[a]);
        self.push(out, Op::GatherCols { a, idx: idx.to_vec() }, rg)
    }

    /// Scalar `sum(weights * a)` with constant weights.
    pub fn weighted_sum(&mut self, a: NodeId, weights: Array) -> NodeId {
        let va = self.value(a);
        assert_eq!(va.shape(), weights.shape(), "weighted_sum shapes");
        let s = dot(va.data(), weights.data());
        let rg = self.rg(&[a]);
        self.push(Array::scalar(s), Op::WeightedSum { a, weights }, rg)
    }

    /// Sum of the entries where `mask` is true.
    pub fn masked_sum(&mut self, a: NodeId, mask: &[bool]) -> NodeId {
        let (r, c) = self.value(a).shape();
        assert_eq!(mask.len(), r * c, "masked_sum mask");
        let w = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
        self.weighted_sum(a, Array::from_vec(r, c, w).expect("shape"))
    }

    /// Mean over the entries where `mask` is true (0 when none are).
    pub fn masked_mean(&mut self, a: NodeId, mask: &[bool]) -> NodeId {
        let (r, c) = self.value(a).shape();
        assert_eq!(mask.len(), r * c, "masked_mean mask");
        let n = mask.iter().filter(|m| **m).count();
        let wv = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let w = mask.iter().map(|m| if *m { wv } else { 0.0 }).collect();
        self.weighted_sum(a, Array::from_vec(r, c, w).expect("shape"))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Array::scalar(s), Op::SumAll(a), rg)
    }

    /// Weighted softmax cross-entropy with integer targets:
    /// `sum_i weights[i] * -log softmax(logits_i)[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], weights: &[f64]) -> NodeId {
        let vl = self.value(logits);
        assert_eq!(targets.len(), vl.rows(), "cross_entropy targets");
        assert_eq!(weights.len(), vl.rows(), "cross_entropy weights");
        let mut probs = vl.clone();
        let mut loss = 0.0;
        for i in 0..probs.rows() {
            let row = probs.row_mut(i);
            log_softmax_in_place(row);
            loss -= weights[i] * row[targets[i]];
            row.iter_mut().for_each(|x| *x = x.exp());
        }
        let rg = self.rg(&[logits]);
        self.push(
            Array::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// 1-D convolution of width `width` over token rows.
    ///
    /// `input` holds `B` sequences of `padded_len` rows each (`(B*L) x E`),
    /// `weight` is `(width*E) x C` and `bias` is `1 x C`. Sequence `b` yields
    /// `max(lengths[b] - width + 1, 1)` windows; windows may run into padding
    /// rows. Output rows are the windows of all sequences in order.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        lengths: &[usize],
        padded_len: usize,
        width: usize,
    ) -> NodeId {
        assert!(padded_len >= width, "conv1d needs padded_len >= width");
        let mut windows = Vec::new();
        for (b, &len) in lengths.iter().enumerate() {
            let n = len.saturating_sub(width - 1).max(1);
            windows.extend((0..n).map(|s| (b, s)));
        }
        let layout = ConvLayout {
            padded_len,
            width,
            windows,
        };
        let vi = self.value(input);
        assert_eq!(vi.rows(), lengths.len() * padded_len, "conv1d input rows");
        let cols = im2col(vi, &layout);
        let vw = self.value(weight);
        let vb = self.value(bias);
        assert_eq!(vw.rows(), cols.cols(), "conv1d weight rows");
        assert_eq!(vb.shape(), (1, vw.cols()), "conv1d bias");
        let mut out = Array::zeros(cols.rows(), vw.cols());
        for i in 0..out.rows() {
            out.row_mut(i).copy_from_slice(vb.data());
        }
        gemm(1.0, &cols, false, vw, false, 1.0, &mut out);
        let rg = self.rg(&[input, weight, bias]);
        self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                layout,
            },
            rg,
        )
    }

    /// Column-wise max over consecutive row segments of the given lengths.
    pub fn max_over_time(&mut self, a: NodeId, segments: &[usize]) -> NodeId {
        let va = self.value(a);
        assert_eq!(segments.iter().sum::<usize>(), va.rows(), "max_over_time segments");
        assert!(segments.iter().all(|s| *s > 0), "max_over_time empty segment");
        let c = va.cols();
        let mut out = Array::zeros(segments.len(), c);
        let mut argmax = vec![0usize; segments.len() * c];
        let mut start = 0;
        for (b, &n) in segments.iter().enumerate() {
            for j in 0..c {
                let mut best = start;
                for r in start + 1..start + n {
                    if va.get(r, j) > va.get(best, j) {
                        best = r;
                    }
                }
                argmax[b * c + j] = best;
                out.set(b, j, va.get(best, j));
            }
            start += n;
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::MaxOverTime { a, argmax }, rg)
    }

    /// Back-propagates from a scalar node and returns per-parameter gradients.
    ///
    /// Parameters never reached from `loss` get zero gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        if !lv.is_finite() {
            return Err(Error::NaNDetected("loss".into()));
        }
        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Array>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &dy, &mut grads, &mut out);
        }
        for (id, name, _) in self.params.iter() {
            if !out.get(id).is_finite() {
                return Err(Error::NaNDetected(format!("gradient of {name}")));
            }
        }
        Ok(out)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, idx: usize, dy: &Array, grads: &mut [Option<Array>], out: &mut Gradients) {
        let y = match &self.nodes[idx].value {
            Value::Owned(a) => a,
            Value::Param(p) => self.params.get(*p),
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Param(p) => out.get_mut(*p).add_assign(dy),
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let g = slot(grads, *a, va.shape());
                    gemm(1.0, dy, false, vb, true, 1.0, g);
                }
                if self.needs(*b) {
                    let g = slot(grads, *b, vb.shape());
                    gemm(1.0, va, true, dy, false, 1.0, g);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    slot(grads, *a, dy.shape()).add_assign(dy);
                }
                if self.needs(*b) {
                    slot(grads, *b, dy.shape()).add_assign(dy);
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    slot(grads, *a, dy.shape()).add_assign(dy);
                }
                if self.needs(*b) {
                    let g = slot(grads, *b, dy.shape());
                    for (x, d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *x -= *d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let g = slot(grads, *a, dy.shape());
                    for ((x, d), v) in g.data_mut().iter_mut().zip(dy.data()).zip(vb.data()) {
                        *x += d * v;
                    }
                }
                if self.needs(*b) {
                    let g = slot(grads, *b, dy.shape());
                    for ((x, d), v) in g.data_mut().iter_mut().zip(dy.data()).zip(va.data()) {
                        *x += d * v;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    slot(grads, *a, dy.shape()).add_assign(dy);
                }
                if self.needs(*row) {
                    let g = slot(grads, *row, (1, dy.cols()));
                    for i in 0..dy.rows() {
                        axpy(1.0, dy.row(i), g.data_mut());
                    }
                }
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (self.value(*a), self.value(*col));
                if self.needs(*a) {
                    let g = slot(grads, *a, dy.shape());
                    for i in 0..dy.rows() {
                        axpy(vc.data()[i], dy.row(i), g.row_mut(i));
                    }
                }
                if self.needs(*col) {
                    let g = slot(grads, *col, vc.shape());
                    for i in 0..dy.rows() {
                        g.data_mut()[i] += dot(dy.row(i), va.row(i));
                    }
                }
            }
            Op::Scale(a, s) => {
                let g = slot(grads, *a, dy.shape());
                axpy(*s, dy.data(), g.data_mut());
            }
            Op::Tanh(a) => {
                let g = slot(grads, *a, dy.shape());
                for ((x, d), v) in g.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                    *x += d * (1.0 - v * v);
                }
            }
            Op::Sigmoid(a) => {
                let g = slot(grads, *a, dy.shape());
                for ((x, d), v) in g.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                    *x += d * v * (1.0 - v);
                }
            }
            Op::Relu(a) => {
                let g = slot(grads, *a, dy.shape());
                for ((x, d), v) in g.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                    if *v > 0.0 {
                        *x += d;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let g = slot(grads, *a, dy.shape());
                for i in 0..dy.rows() {
                    let (yr, dr) = (y.row(i), dy.row(i));
                    let s = dot(yr, dr);
                    for ((x, d), p) in g.row_mut(i).iter_mut().zip(dr).zip(yr) {
                        *x += p * (d - s);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let g = slot(grads, *a, dy.shape());
                for i in 0..dy.rows() {
                    let (yr, dr) = (y.row(i), dy.row(i));
                    let s: f64 = dr.iter().sum();
                    for ((x, d), l) in g.row_mut(i).iter_mut().zip(dr).zip(yr) {
                        *x += d - l.exp() * s;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let shape = self.value(*table).shape();
                let g = slot(grads, *table, shape);
                for (r, &id) in ids.iter().enumerate() {
                    axpy(1.0, dy.row(r), g.row_mut(id));
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let shape = self.value(*p).shape();
                    if self.needs(*p) {
                        let g = slot(grads, *p, shape);
                        for i in 0..dy.rows() {
                            axpy(1.0, &dy.row(i)[off..off + shape.1], g.row_mut(i));
                        }
                    }
                    off += shape.1;
                }
            }
            Op::SliceCols { a, start } => {
                let shape = self.value(*a).shape();
                let g = slot(grads, *a, shape);
                for i in 0..dy.rows() {
                    axpy(1.0, dy.row(i), &mut g.row_mut(i)[*start..*start + dy.cols()]);
                }
            }
            Op::SelectRows { mask, a, b } => {
                for (src, want) in [(*a, true), (*b, false)] {
                    if !self.needs(src) {
                        continue;
                    }
                    let g = slot(grads, src, dy.shape());
                    for (i, &m) in mask.iter().enumerate() {
                        if m == want {
                            axpy(1.0, dy.row(i), g.row_mut(i));
                        }
                    }
                }
            }
            Op::StackSteps(steps) => {
                let t_len = steps.len();
                for (t, s) in steps.iter().enumerate() {
                    if !self.needs(*s) {
                        continue;
                    }
                    let shape = self.value(*s).shape();
                    let g = slot(grads, *s, shape);
                    for i in 0..shape.0 {
                        axpy(1.0, dy.row(i * t_len + t), g.row_mut(i));
                    }
                }
            }
            Op::AttnScores { query, keys, steps } => {
                let (vq, vk) = (self.value(*query), self.value(*keys));
                let b = vq.rows();
                if self.needs(*query) {
                    let g = slot(grads, *query, vq.shape());
                    for i in 0..b {
                        for t in 0..*steps {
                            axpy(dy.get(i, t), vk.row(i * steps + t), g.row_mut(i));
                        }
                    }
                }
                if self.needs(*keys) {
                    let g = slot(grads, *keys, vk.shape());
                    for i in 0..b {
                        for t in 0..*steps {
                            axpy(dy.get(i, t), vq.row(i), g.row_mut(i * steps + t));
                        }
                    }
                }
            }
            Op::AttnContext {
                weights,
                values,
                steps,
            } => {
                let (vw, vv) = (self.value(*weights), self.value(*values));
                let b = vw.rows();
                if self.needs(*weights) {
                    let g = slot(grads, *weights, vw.shape());
                    for i in 0..b {
                        for t in 0..*steps {
                            let d = dot(dy.row(i), vv.row(i * steps + t));
                            g.data_mut()[i * steps + t] += d;
                        }
                    }
                }
                if self.needs(*values) {
                    let g = slot(grads, *values, vv.shape());
                    for i in 0..b {
                        for t in 0..*steps {
                            axpy(vw.get(i, t), dy.row(i), g.row_mut(i * steps + t));
                        }
                    }
                }
            }
            Op::GatherCols { a, idx } => {
                let shape = self.value(*a).shape();
                let g = slot(grads, *a, shape);
                for (i, &j) in idx.iter().enumerate() {
                    g.data_mut()[i * shape.1 + j] += dy.data()[i];
                }
            }
            Op::WeightedSum { a, weights } => {
                let g = slot(grads, *a, weights.shape());
                axpy(dy.item(), weights.data(), g.data_mut());
            }
            Op::SumAll(a) => {
                let shape = self.value(*a).shape();
                let d = dy.item();
                slot(grads, *a, shape).data_mut().iter_mut().for_each(|x| *x += d);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let g = slot(grads, *logits, probs.shape());
                let d = dy.item();
                for i in 0..probs.rows() {
                    let w = weights[i] * d;
                    if w == 0.0 {
                        continue;
                    }
                    axpy(w, probs.row(i), g.row_mut(i));
                    g.data_mut()[i * probs.cols() + targets[i]] -= w;
                }
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                layout,
            } => {
                let vi = self.value(*input);
                let vw = self.value(*weight);
                if self.needs(*bias) {
                    let g = slot(grads, *bias, (1, dy.cols()));
                    for i in 0..dy.rows() {
                        axpy(1.0, dy.row(i), g.data_mut());
                    }
                }
                if self.needs(*weight) {
                    let cols = im2col(vi, layout);
                    let g = slot(grads, *weight, vw.shape());
                    gemm(1.0, &cols, true, dy, false, 1.0, g);
                }
                if self.needs(*input) {
                    let mut dcols = Array::zeros(dy.rows(), vw.rows());
                    gemm(1.0, dy, false, vw, true, 0.0, &mut dcols);
                    let e = vi.cols();
                    let g = slot(grads, *input, vi.shape());
                    for (r, &(b, s)) in layout.windows.iter().enumerate() {
                        for o in 0..layout.width {
                            let src = &dcols.row(r)[o * e..(o + 1) * e];
                            axpy(1.0, src, g.row_mut(b * layout.padded_len + s + o));
                        }
                    }
                }
            }
            Op::MaxOverTime { a, argmax } => {
                let shape = self.value(*a).shape();
                let c = shape.1;
                let g = slot(grads, *a, shape);
                for (k, &r) in argmax.iter().enumerate() {
                    g.data_mut()[r * c + k % c] += dy.data()[k];
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Array>], id: NodeId, shape: (usize, usize)) -> &mut Array {
    grads[id.0].get_or_insert_with(|| Array::zeros(shape.0, shape.1))
}

fn im2col(input: &Array, layout: &ConvLayout) -> Array {
    let e = input.cols();
    let mut cols = Array::zeros(layout.windows.len(), layout.width * e);
    for (r, &(b, s)) in layout.windows.iter().enumerate() {
        let row = cols.row_mut(r);
        for o in 0..layout.width {
            row[o * e..(o + 1) * e].copy_from_slice(input.row(b * layout.padded_len + s + o));
        }
    }
    cols
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (b, a) in y.iter_mut().zip(x) {
        *b += alpha * a;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    row.iter_mut().for_each(|x| *x /= s);
}

/// Numerically stable in-place log-softmax of one row.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|x| (*x - m).exp()).sum();
    let lse = m + s.ln();
    row.iter_mut().for_each(|x| *x -= lse);
}
