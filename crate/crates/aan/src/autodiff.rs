//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records the forward pass as a Wengert list; [`Tape::backward`]
//! replays it in reverse, accumulating adjoints. The op set is exactly what
//! the adversarial document-transfer graph needs: matrix products, a centered
//! 1-d sequence convolution, activations, pooling, relevance-weighted pooling,
//! batch normalization, inverted dropout, the loss heads, and a
//! gradient-reversal node whose forward is the identity and whose backward
//! multiplies the upstream gradient by `-rho`.
//!
//! Gradients accumulate additively: calling `backward` twice without zeroing
//! doubles every gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

pub type NodeId = usize;

/// Forward-pass mode: training uses batch statistics and live dropout,
/// evaluation uses running statistics and is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Variance epsilon for batch normalization.
pub const BN_EPS: f64 = 1e-5;
/// Momentum for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;
/// Denominator guard for relevance-weighted pooling.
pub const POOL_EPS: f64 = 1e-8;
/// Probability clamp inside the cross-entropy log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Updated running statistics produced by a train-mode batch-norm node.
/// The caller decides when (and whether) to commit them to the parameters.
#[derive(Clone, Debug)]
pub struct BnDelta {
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Clone, Debug)]
struct BnCache {
    /// Normalized input (before scale/shift), batch-shaped.
    xhat: Tensor,
    /// Per-feature 1/sqrt(var + eps) actually used in the forward pass.
    inv_std: Vec<f64>,
    train: bool,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    AddBias { x: NodeId, b: NodeId },
    Matmul(NodeId, NodeId),
    Conv1dSeq { x: NodeId, filters: NodeId, bias: NodeId, window: usize },
    Relu(NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    ClampUpper { x: NodeId, limit: f64 },
    MaxPoolRows { x: NodeId, argmax: Vec<usize> },
    MeanRows(NodeId),
    WeightedSumRows { x: NodeId, w: NodeId },
    GradReverse { x: NodeId, rho: f64 },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, cache: BnCache },
    Dropout { x: NodeId, mask: Vec<f64> },
    CrossEntropy { p: NodeId, y: Tensor },
    SquaredError(NodeId, NodeId),
    FrobDevIdentity(NodeId),
    Embed { table: NodeId, ids: Vec<usize> },
    StackRows(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize },
    GatherRows { x: NodeId, idx: Vec<usize> },
    Reshape(NodeId),
    SumScalars(Vec<NodeId>),
    SumAll(NodeId),
}

pub struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
    requires_grad: bool,
}

/// One forward pass worth of computation. Registration order is the
/// topological order; the structure is acyclic by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].grad
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for n in self.nodes.iter_mut() {
            n.grad.fill(0.0);
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        let grad = Tensor::zeros(value.dims().to_vec());
        self.nodes.push(Node { value, grad, op, requires_grad });
        self.nodes.len() - 1
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    // ---- arithmetic ----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if !self.nodes[a].value.same_shape(&self.nodes[b].value) {
            return Err(Error::Dimension(format!(
                "add: {:?} vs {:?}",
                self.nodes[a].value.dims(),
                self.nodes[b].value.dims()
            )));
        }
        let mut v = self.nodes[a].value.clone();
        v.add_assign(&self.nodes[b].value);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.nodes[x].value.map(|v| v * c);
        let rg = self.rg(x);
        self.push(v, Op::Scale(x, c), rg)
    }

    /// Broadcast-add a bias vector `[n]` to every row of `x [m x n]`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, bv) = (&self.nodes[x].value, &self.nodes[b].value);
        if bv.rank() != 1 || xv.cols() != bv.len() {
            return Err(Error::Dimension(format!(
                "add_bias: x {:?} bias {:?}",
                xv.dims(),
                bv.dims()
            )));
        }
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        for r in 0..rows {
            for c in 0..cols {
                *out.at_mut(r, c) += bv.data()[c];
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias { x, b }, rg))
    }

    /// Matrix product `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows() {
            return Err(Error::Dimension(format!(
                "matmul: {:?} . {:?}",
                av.dims(),
                bv.dims()
            )));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            for p in 0..k {
                let aip = av.at(i, p);
                if aip == 0.0 {
                    continue;
                }
                let brow = bv.row(p);
                let orow = &mut out.data_mut()[i * n..(i + 1) * n];
                for c in 0..n {
                    orow[c] += aip * brow[c];
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Matmul(a, b), rg))
    }

    // ---- sequence convolution ------------------------------------------

    /// Centered 1-d convolution over a token sequence. `x` is `[L x d]`,
    /// `filters` is `[w*d x f]` (window positions concatenated row-wise),
    /// `bias` is `[f]`. The sequence is zero-padded so output row `j` is the
    /// affine map of the window centered at token `j`.
    pub fn conv1d_seq(
        &mut self,
        x: NodeId,
        filters: NodeId,
        bias: NodeId,
        window: usize,
    ) -> Result<NodeId> {
        if window < 1 || window % 2 == 0 {
            return Err(Error::Config(format!(
                "conv window must be odd and >= 1, got {window}"
            )));
        }
        let (xv, fv, bv) = (
            &self.nodes[x].value,
            &self.nodes[filters].value,
            &self.nodes[bias].value,
        );
        let (l, d) = (xv.rows(), xv.cols());
        let f = fv.cols();
        if fv.rows() != window * d || bv.len() != f {
            return Err(Error::Dimension(format!(
                "conv1d_seq: x {:?} filters {:?} bias {:?} window {window}",
                xv.dims(),
                fv.dims(),
                bv.dims()
            )));
        }
        let pad = window / 2;
        let mut out = Tensor::zeros(vec![l, f]);
        for j in 0..l {
            let orow = &mut out.data_mut()[j * f..(j + 1) * f];
            orow.copy_from_slice(bv.data());
            for t in 0..window {
                let src = j as isize + t as isize - pad as isize;
                if src < 0 || src >= l as isize {
                    continue;
                }
                let xrow = xv.row(src as usize);
                for (k, &xk) in xrow.iter().enumerate() {
                    if xk == 0.0 {
                        continue;
                    }
                    let frow = fv.row(t * d + k);
                    for c in 0..f {
                        orow[c] += xk * frow[c];
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(filters) || self.rg(bias);
        Ok(self.push(out, Op::Conv1dSeq { x, filters, bias, window }, rg))
    }

    // ---- activations -----------------------------------------------------

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(v, Op::Relu(x), rg)
    }

    pub fn tanh_op(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.map(f64::tanh);
        let rg = self.rg(x);
        self.push(v, Op::Tanh(x), rg)
    }

    /// `min(x, limit)` elementwise; gradient passes where `x < limit`.
    pub fn clamp_upper(&mut self, x: NodeId, limit: f64) -> NodeId {
        let v = self.nodes[x].value.map(|v| v.min(limit));
        let rg = self.rg(x);
        self.push(v, Op::ClampUpper { x, limit }, rg)
    }

    /// Row-wise softmax; every output row sums to 1.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg)
    }

    // ---- pooling ---------------------------------------------------------

    /// Column-wise max over rows, `[L x f] -> [f]`. On ties the first
    /// maximal row receives the subgradient.
    pub fn max_pool_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.rank() != 2 || xv.rows() < 1 {
            return Err(Error::Dimension(format!(
                "max_pool_rows: need non-empty [L x f], got {:?}",
                xv.dims()
            )));
        }
        let (l, f) = (xv.rows(), xv.cols());
        let mut out = vec![f64::NEG_INFINITY; f];
        let mut argmax = vec![0usize; f];
        for r in 0..l {
            let row = xv.row(r);
            for c in 0..f {
                if row[c] > out[c] {
                    out[c] = row[c];
                    argmax[c] = r;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::MaxPoolRows { x, argmax }, rg))
    }

    /// Column-wise mean over rows, `[L x f] -> [f]`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.rank() != 2 || xv.rows() < 1 {
            return Err(Error::Dimension(format!(
                "mean_rows: need non-empty [L x f], got {:?}",
                xv.dims()
            )));
        }
        let (l, f) = (xv.rows(), xv.cols());
        let mut out = vec![0.0; f];
        for r in 0..l {
            let row = xv.row(r);
            for c in 0..f {
                out[c] += row[c];
            }
        }
        for v in out.iter_mut() {
            *v /= l as f64;
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(x), rg))
    }

    /// Relevance-weighted combination of rows:
    /// `sum_i w[i] x[i,:] / (sum_i w[i] + eps)` with `eps = 1e-8`.
    /// All weights must be non-negative.
    pub fn weighted_sum_rows(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xv, wv) = (&self.nodes[x].value, &self.nodes[w].value);
        if xv.rank() != 2 || wv.rank() != 1 || wv.len() != xv.rows() {
            return Err(Error::Dimension(format!(
                "weighted_sum_rows: x {:?} w {:?}",
                xv.dims(),
                wv.dims()
            )));
        }
        if wv.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Contract(
                "weighted_sum_rows: negative weight".into(),
            ));
        }
        let (l, f) = (xv.rows(), xv.cols());
        let denom = wv.sum() + POOL_EPS;
        let mut out = vec![0.0; f];
        for i in 0..l {
            let wi = wv.data()[i];
            if wi == 0.0 {
                continue;
            }
            let row = xv.row(i);
            for c in 0..f {
                out[c] += wi * row[c];
            }
        }
        for v in out.iter_mut() {
            *v /= denom;
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor::vector(out), Op::WeightedSumRows { x, w }, rg))
    }

    // ---- adversarial plumbing ---------------------------------------------

    /// Identity forward; backward multiplies the upstream gradient by `-rho`.
    pub fn grad_reverse(&mut self, x: NodeId, rho: f64) -> NodeId {
        let v = self.nodes[x].value.clone();
        let rg = self.rg(x);
        self.push(v, Op::GradReverse { x, rho }, rg)
    }

    // ---- normalization and dropout ----------------------------------------

    /// Batch normalization over rows of `x [B x f]` with learned per-feature
    /// scale `gamma` and shift `beta`. Train mode standardizes with batch
    /// statistics and returns updated running statistics (momentum 0.9);
    /// eval mode standardizes with the supplied running statistics.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &Tensor,
        running_var: &Tensor,
        mode: Mode,
    ) -> Result<(NodeId, Option<BnDelta>)> {
        let xv = &self.nodes[x].value;
        let f = xv.cols();
        let b = xv.rows();
        if xv.rank() != 2
            || self.nodes[gamma].value.len() != f
            || self.nodes[beta].value.len() != f
            || running_mean.len() != f
            || running_var.len() != f
        {
            return Err(Error::Dimension(format!(
                "batch_norm: x {:?} gamma {:?} beta {:?}",
                xv.dims(),
                self.nodes[gamma].value.dims(),
                self.nodes[beta].value.dims()
            )));
        }
        if mode == Mode::Train && b < 2 {
            return Err(Error::Contract(format!(
                "batch_norm: train mode needs a batch of >= 2 rows, got {b}"
            )));
        }

        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; f];
                for r in 0..b {
                    for (c, m) in mean.iter_mut().enumerate() {
                        *m += xv.at(r, c);
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0; f];
                for r in 0..b {
                    for c in 0..f {
                        let d = xv.at(r, c) - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= b as f64);
                (mean, var)
            }
            Mode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
        };

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Tensor::zeros(vec![b, f]);
        for r in 0..b {
            for c in 0..f {
                *xhat.at_mut(r, c) = (xv.at(r, c) - mean[c]) * inv_std[c];
            }
        }
        let gv = &self.nodes[gamma].value;
        let bv = &self.nodes[beta].value;
        let mut out = Tensor::zeros(vec![b, f]);
        for r in 0..b {
            for c in 0..f {
                *out.at_mut(r, c) = gv.data()[c] * xhat.at(r, c) + bv.data()[c];
            }
        }

        let delta = match mode {
            Mode::Train => {
                let mut rm = running_mean.clone();
                let mut rv = running_var.clone();
                for c in 0..f {
                    rm.data_mut()[c] = BN_MOMENTUM * rm.data()[c] + (1.0 - BN_MOMENTUM) * mean[c];
                    rv.data_mut()[c] = BN_MOMENTUM * rv.data()[c] + (1.0 - BN_MOMENTUM) * var[c];
                }
                Some(BnDelta { running_mean: rm, running_var: rv })
            }
            Mode::Eval => None,
        };

        let cache = BnCache { xhat, inv_std, train: mode == Mode::Train };
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let id = self.push(out, Op::BatchNorm { x, gamma, beta, cache }, rg);
        Ok((id, delta))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`;
    /// eval mode (or rate 0) is the identity.
    pub fn dropout<R: Rng>(
        &mut self,
        x: NodeId,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0,1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x].value.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let xv = &self.nodes[x].value;
        let data: Vec<f64> = xv
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&v, &m)| v * m)
            .collect();
        let out = Tensor::new(xv.dims().to_vec(), data).expect("mask preserves shape");
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    // ---- losses ------------------------------------------------------------

    /// Cross-entropy `-sum y log p` over a batch of probability rows, with the
    /// log argument clamped at 1e-12. `y` is a constant one-hot matrix of the
    /// same shape; rows of `p` must sum to 1 within 1e-6.
    pub fn cross_entropy(&mut self, p: NodeId, y: Tensor) -> Result<NodeId> {
        let pv = &self.nodes[p].value;
        if !pv.same_shape(&y) {
            return Err(Error::Dimension(format!(
                "cross_entropy: p {:?} y {:?}",
                pv.dims(),
                y.dims()
            )));
        }
        let (rows, cols) = (pv.rows(), pv.cols());
        for r in 0..rows {
            let s: f64 = pv.row(r).iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Contract(format!(
                    "cross_entropy: row {r} sums to {s}, not a distribution"
                )));
            }
        }
        let mut loss = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let yv = y.at(r, c);
                if yv != 0.0 {
                    loss -= yv * pv.at(r, c).max(LOG_CLAMP).ln();
                }
            }
        }
        let rg = self.rg(p);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { p, y }, rg))
    }

    /// Sum of squared differences between two same-shaped nodes.
    pub fn squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if !self.nodes[a].value.same_shape(&self.nodes[b].value) {
            return Err(Error::Dimension(format!(
                "squared_error: {:?} vs {:?}",
                self.nodes[a].value.dims(),
                self.nodes[b].value.dims()
            )));
        }
        let s: f64 = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data().iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s), Op::SquaredError(a, b), rg))
    }

    /// Squared Frobenius deviation from the identity, `||W - I||_F^2`.
    pub fn frob_dev_from_identity(&mut self, w: NodeId) -> Result<NodeId> {
        let wv = &self.nodes[w].value;
        if wv.rank() != 2 || wv.rows() != wv.cols() {
            return Err(Error::Dimension(format!(
                "frob_dev_from_identity: want square matrix, got {:?}",
                wv.dims()
            )));
        }
        let n = wv.rows();
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                let d = wv.at(r, c) - if r == c { 1.0 } else { 0.0 };
                s += d * d;
            }
        }
        let rg = self.rg(w);
        Ok(self.push(Tensor::scalar(s), Op::FrobDevIdentity(w), rg))
    }

    // ---- structural ops ------------------------------------------------------

    /// Embedding lookup: rows of `table [V x d]` selected by token id.
    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tv = &self.nodes[table].value;
        let (v, d) = (tv.rows(), tv.cols());
        if ids.is_empty() {
            return Err(Error::Contract("embed: empty token sequence".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Dimension(format!(
                "embed: token id {bad} out of range for vocabulary {v}"
            )));
        }
        let mut out = Tensor::zeros(vec![ids.len(), d]);
        for (j, &id) in ids.iter().enumerate() {
            out.data_mut()[j * d..(j + 1) * d].copy_from_slice(tv.row(id));
        }
        let rg = self.rg(table);
        Ok(self.push(out, Op::Embed { table, ids: ids.to_vec() }, rg))
    }

    /// Stack vectors `[f]` into a matrix `[B x f]`.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::Dimension("stack_rows: empty input".into()));
        }
        let f = self.nodes[rows[0]].value.len();
        for &r in rows {
            let v = &self.nodes[r].value;
            if v.rank() != 1 || v.len() != f {
                return Err(Error::Dimension(format!(
                    "stack_rows: want vectors of length {f}, got {:?}",
                    v.dims()
                )));
            }
        }
        let mut out = Tensor::zeros(vec![rows.len(), f]);
        for (i, &r) in rows.iter().enumerate() {
            out.data_mut()[i * f..(i + 1) * f].copy_from_slice(self.nodes[r].value.data());
        }
        let rg = rows.iter().any(|&r| self.rg(r));
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rg))
    }

    /// Concatenate matrices `[L_i x f]` along rows.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_rows: empty input".into()));
        }
        let f = self.nodes[parts[0]].value.cols();
        let mut total = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            if v.rank() != 2 || v.cols() != f {
                return Err(Error::Dimension(format!(
                    "concat_rows: want [L x {f}], got {:?}",
                    v.dims()
                )));
            }
            total += v.rows();
        }
        let mut out = Tensor::zeros(vec![total, f]);
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            let n = v.len();
            out.data_mut()[at..at + n].copy_from_slice(v.data());
            at += n;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Contiguous row slice `[start, start+len)` of a matrix.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.rank() != 2 || start + len > xv.rows() || len == 0 {
            return Err(Error::Dimension(format!(
                "slice_rows: [{start}, {start}+{len}) of {:?}",
                xv.dims()
            )));
        }
        let f = xv.cols();
        let data = xv.data()[start * f..(start + len) * f].to_vec();
        let out = Tensor::new(vec![len, f], data).expect("slice preserves shape");
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows { x, start }, rg))
    }

    /// Gather rows of a matrix by index (duplicates allowed).
    pub fn gather_rows(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.rank() != 2 || idx.is_empty() {
            return Err(Error::Dimension(format!(
                "gather_rows: {:?} with {} indices",
                xv.dims(),
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::Dimension(format!(
                "gather_rows: index {bad} out of range for {} rows",
                xv.rows()
            )));
        }
        let f = xv.cols();
        let mut out = Tensor::zeros(vec![idx.len(), f]);
        for (j, &i) in idx.iter().enumerate() {
            out.data_mut()[j * f..(j + 1) * f].copy_from_slice(xv.row(i));
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows { x, idx: idx.to_vec() }, rg))
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshape(&mut self, x: NodeId, dims: Vec<usize>) -> Result<NodeId> {
        let v = self.nodes[x].value.reshaped(dims)?;
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    /// Sum of all elements of a tensor, as a scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x].value.sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(Error::Dimension("sum_scalars: empty input".into()));
        }
        let mut s = 0.0;
        for &t in terms {
            let v = &self.nodes[t].value;
            if !v.is_scalar() {
                return Err(Error::Contract(format!(
                    "sum_scalars: non-scalar term of shape {:?}",
                    v.dims()
                )));
            }
            s += v.item();
        }
        let rg = terms.iter().any(|&t| self.rg(t));
        Ok(self.push(Tensor::scalar(s), Op::SumScalars(terms.to_vec()), rg))
    }

    // ---- backward -------------------------------------------------------------

    /// Reverse sweep from a scalar loss. Adjoints are computed in a scratch
    /// buffer and then added into each node's persistent `grad`, so repeated
    /// calls accumulate.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got {:?}",
                self.nodes[loss].value.dims()
            )));
        }
        let mut scratch: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        scratch[loss] = Some(Tensor::scalar(1.0));

        {
            let nodes = &self.nodes;
            let acc = |scratch: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
                if !nodes[id].requires_grad {
                    return;
                }
                match &mut scratch[id] {
                    Some(t) => t.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };

            for i in (0..=loss).rev() {
                if !nodes[i].requires_grad {
                    continue;
                }
                let g = match scratch[i].take() {
                    Some(g) => g,
                    None => continue,
                };
                match &nodes[i].op {
                    Op::Leaf => {}
                    Op::Add(a, b) => {
                        acc(&mut scratch, *a, g.clone());
                        acc(&mut scratch, *b, g.clone());
                    }
                    Op::Scale(x, c) => {
                        acc(&mut scratch, *x, g.map(|v| v * c));
                    }
                    Op::AddBias { x, b } => {
                        let cols = g.cols();
                        let mut gb = vec![0.0; cols];
                        for r in 0..g.rows() {
                            for (c, s) in gb.iter_mut().enumerate() {
                                *s += g.at(r, c);
                            }
                        }
                        acc(&mut scratch, *x, g.clone());
                        acc(&mut scratch, *b, Tensor::vector(gb));
                    }
                    Op::Matmul(a, b) => {
                        let av = &nodes[*a].value;
                        let bv = &nodes[*b].value;
                        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                        if nodes[*a].requires_grad {
                            // gA = g . B^T
                            let mut ga = Tensor::zeros(vec![m, k]);
                            for i2 in 0..m {
                                for c in 0..n {
                                    let gic = g.at(i2, c);
                                    if gic == 0.0 {
                                        continue;
                                    }
                                    let garow = &mut ga.data_mut()[i2 * k..(i2 + 1) * k];
                                    for p in 0..k {
                                        garow[p] += gic * bv.at(p, c);
                                    }
                                }
                            }
                            acc(&mut scratch, *a, ga);
                        }
                        if nodes[*b].requires_grad {
                            // gB = A^T . g
                            let mut gb = Tensor::zeros(vec![k, n]);
                            for i2 in 0..m {
                                for p in 0..k {
                                    let aip = av.at(i2, p);
                                    if aip == 0.0 {
                                        continue;
                                    }
                                    let grow = g.row(i2);
                                    let gbrow = &mut gb.data_mut()[p * n..(p + 1) * n];
                                    for c in 0..n {
                                        gbrow[c] += aip * grow[c];
                                    }
                                }
                            }
                            acc(&mut scratch, *b, gb);
                        }
                    }
                    Op::Conv1dSeq { x, filters, bias, window } => {
                        let xv = &nodes[*x].value;
                        let fv = &nodes[*filters].value;
                        let (l, d) = (xv.rows(), xv.cols());
                        let f = fv.cols();
                        let pad = window / 2;
                        if nodes[*bias].requires_grad {
                            let mut gb = vec![0.0; f];
                            for j in 0..l {
                                for (c, s) in gb.iter_mut().enumerate() {
                                    *s += g.at(j, c);
                                }
                            }
                            acc(&mut scratch, *bias, Tensor::vector(gb));
                        }
                        let want_x = nodes[*x].requires_grad;
                        let want_f = nodes[*filters].requires_grad;
                        if want_x || want_f {
                            let mut gx = Tensor::zeros(vec![l, d]);
                            let mut gf = Tensor::zeros(vec![window * d, f]);
                            for j in 0..l {
                                let grow = g.row(j);
                                for t in 0..*window {
                                    let src = j as isize + t as isize - pad as isize;
                                    if src < 0 || src >= l as isize {
                                        continue;
                                    }
                                    let src = src as usize;
                                    for k in 0..d {
                                        let frow = fv.row(t * d + k);
                                        if want_x {
                                            let mut s = 0.0;
                                            for c in 0..f {
                                                s += frow[c] * grow[c];
                                            }
                                            *gx.at_mut(src, k) += s;
                                        }
                                        if want_f {
                                            let xk = xv.at(src, k);
                                            if xk != 0.0 {
                                                let gfrow = &mut gf.data_mut()
                                                    [(t * d + k) * f..(t * d + k + 1) * f];
                                                for c in 0..f {
                                                    gfrow[c] += xk * grow[c];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                            if want_x {
                                acc(&mut scratch, *x, gx);
                            }
                            if want_f {
                                acc(&mut scratch, *filters, gf);
                            }
                        }
                    }
                    Op::Relu(x) => {
                        let xv = &nodes[*x].value;
                        let data: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(xv.data().iter())
                            .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                            .collect();
                        acc(
                            &mut scratch,
                            *x,
                            Tensor::new(xv.dims().to_vec(), data).expect("shape"),
                        );
                    }
                    Op::Tanh(x) => {
                        let yv = &nodes[i].value;
                        let data: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(yv.data().iter())
                            .map(|(&gv, &y)| gv * (1.0 - y * y))
                            .collect();
                        acc(
                            &mut scratch,
                            *x,
                            Tensor::new(yv.dims().to_vec(), data).expect("shape"),
                        );
                    }
                    Op::ClampUpper { x, limit } => {
                        let xv = &nodes[*x].value;
                        let data: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(xv.data().iter())
                            .map(|(&gv, &v)| if v < *limit { gv } else { 0.0 })
                            .collect();
                        acc(
                            &mut scratch,
                            *x,
                            Tensor::new(xv.dims().to_vec(), data).expect("shape"),
                        );
                    }
                    Op::SoftmaxRows(x) => {
                        let yv = &nodes[i].value;
                        let (rows, cols) = (yv.rows(), yv.cols());
                        let mut gx = Tensor::zeros(vec![rows, cols]);
                        for r in 0..rows {
                            let yrow = yv.row(r);
                            let grow = g.row(r);
                            let dot: f64 =
                                yrow.iter().zip(grow.iter()).map(|(&y, &gv)| y * gv).sum();
                            let gxrow = &mut gx.data_mut()[r * cols..(r + 1) * cols];
                            for c in 0..cols {
                                gxrow[c] = yrow[c] * (grow[c] - dot);
                            }
                        }
                        if yv.rank() == 1 {
                            let gv = gx.reshaped(vec![cols]).expect("shape");
                            acc(&mut scratch, *x, gv);
                        } else {
                            acc(&mut scratch, *x, gx);
                        }
                    }
                    Op::MaxPoolRows { x, argmax } => {
                        let xv = &nodes[*x].value;
                        let mut gx = Tensor::zeros(xv.dims().to_vec());
                        for (c, &r) in argmax.iter().enumerate() {
                            *gx.at_mut(r, c) += g.data()[c];
                        }
                        acc(&mut scratch, *x, gx);
                    }
                    Op::MeanRows(x) => {
                        let xv = &nodes[*x].value;
                        let l = xv.rows() as f64;
                        let mut gx = Tensor::zeros(xv.dims().to_vec());
                        for r in 0..xv.rows() {
                            for c in 0..xv.cols() {
                                *gx.at_mut(r, c) = g.data()[c] / l;
                            }
                        }
                        acc(&mut scratch, *x, gx);
                    }
                    Op::WeightedSumRows { x, w } => {
                        let xv = &nodes[*x].value;
                        let wv = &nodes[*w].value;
                        let out = &nodes[i].value;
                        let denom = wv.sum() + POOL_EPS;
                        let (l, f) = (xv.rows(), xv.cols());
                        if nodes[*x].requires_grad {
                            let mut gx = Tensor::zeros(vec![l, f]);
                            for r in 0..l {
                                let wi = wv.data()[r] / denom;
                                if wi == 0.0 {
                                    continue;
                                }
                                for c in 0..f {
                                    *gx.at_mut(r, c) = wi * g.data()[c];
                                }
                            }
                            acc(&mut scratch, *x, gx);
                        }
                        if nodes[*w].requires_grad {
                            let mut gw = vec![0.0; l];
                            for (r, gwr) in gw.iter_mut().enumerate() {
                                let xrow = xv.row(r);
                                let mut s = 0.0;
                                for c in 0..f {
                                    s += (xrow[c] - out.data()[c]) * g.data()[c];
                                }
                                *gwr = s / denom;
                            }
                            acc(&mut scratch, *w, Tensor::vector(gw));
                        }
                    }
                    Op::GradReverse { x, rho } => {
                        acc(&mut scratch, *x, g.map(|v| -rho * v));
                    }
                    Op::BatchNorm { x, gamma, beta, cache } => {
                        let f = g.cols();
                        let b = g.rows() as f64;
                        let gv = &nodes[*gamma].value;
                        if nodes[*beta].requires_grad {
                            let mut gb = vec![0.0; f];
                            for r in 0..g.rows() {
                                for (c, s) in gb.iter_mut().enumerate() {
                                    *s += g.at(r, c);
                                }
                            }
                            acc(&mut scratch, *beta, Tensor::vector(gb));
                        }
                        if nodes[*gamma].requires_grad {
                            let mut gg = vec![0.0; f];
                            for r in 0..g.rows() {
                                for (c, s) in gg.iter_mut().enumerate() {
                                    *s += g.at(r, c) * cache.xhat.at(r, c);
                                }
                            }
                            acc(&mut scratch, *gamma, Tensor::vector(gg));
                        }
                        if nodes[*x].requires_grad {
                            let rows = g.rows();
                            let mut gx = Tensor::zeros(vec![rows, f]);
                            if cache.train {
                                // Batch statistics are functions of x.
                                for c in 0..f {
                                    let gam = gv.data()[c];
                                    let istd = cache.inv_std[c];
                                    let mut sum_gxhat = 0.0;
                                    let mut sum_gxhat_xhat = 0.0;
                                    for r in 0..rows {
                                        let gxh = g.at(r, c) * gam;
                                        sum_gxhat += gxh;
                                        sum_gxhat_xhat += gxh * cache.xhat.at(r, c);
                                    }
                                    for r in 0..rows {
                                        let gxh = g.at(r, c) * gam;
                                        let v = istd
                                            * (gxh
                                                - sum_gxhat / b
                                                - cache.xhat.at(r, c) * sum_gxhat_xhat / b);
                                        *gx.at_mut(r, c) = v;
                                    }
                                }
                            } else {
                                for c in 0..f {
                                    let k = gv.data()[c] * cache.inv_std[c];
                                    for r in 0..rows {
                                        *gx.at_mut(r, c) = g.at(r, c) * k;
                                    }
                                }
                            }
                            acc(&mut scratch, *x, gx);
                        }
                    }
                    Op::Dropout { x, mask } => {
                        let xv = &nodes[*x].value;
                        let data: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(mask.iter())
                            .map(|(&gv, &m)| gv * m)
                            .collect();
                        acc(
                            &mut scratch,
                            *x,
                            Tensor::new(xv.dims().to_vec(), data).expect("shape"),
                        );
                    }
                    Op::CrossEntropy { p, y } => {
                        let pv = &nodes[*p].value;
                        let gs = g.item();
                        let mut gp = Tensor::zeros(pv.dims().to_vec());
                        for r in 0..pv.rows() {
                            for c in 0..pv.cols() {
                                let yv = y.at(r, c);
                                if yv != 0.0 {
                                    let pvv = pv.at(r, c);
                                    if pvv >= LOG_CLAMP {
                                        *gp.at_mut(r, c) = -gs * yv / pvv;
                                    }
                                }
                            }
                        }
                        acc(&mut scratch, *p, gp);
                    }
                    Op::SquaredError(a, b) => {
                        let gs = g.item();
                        let av = &nodes[*a].value;
                        let bv = &nodes[*b].value;
                        if nodes[*a].requires_grad {
                            let data: Vec<f64> = av
                                .data()
                                .iter()
                                .zip(bv.data().iter())
                                .map(|(&x, &y)| 2.0 * gs * (x - y))
                                .collect();
                            acc(
                                &mut scratch,
                                *a,
                                Tensor::new(av.dims().to_vec(), data).expect("shape"),
                            );
                        }
                        if nodes[*b].requires_grad {
                            let data: Vec<f64> = av
                                .data()
                                .iter()
                                .zip(bv.data().iter())
                                .map(|(&x, &y)| -2.0 * gs * (x - y))
                                .collect();
                            acc(
                                &mut scratch,
                                *b,
                                Tensor::new(bv.dims().to_vec(), data).expect("shape"),
                            );
                        }
                    }
                    Op::FrobDevIdentity(w) => {
                        let wv = &nodes[*w].value;
                        let n = wv.rows();
                        let gs = g.item();
                        let mut gw = Tensor::zeros(vec![n, n]);
                        for r in 0..n {
                            for c in 0..n {
                                let d = wv.at(r, c) - if r == c { 1.0 } else { 0.0 };
                                *gw.at_mut(r, c) = 2.0 * gs * d;
                            }
                        }
                        acc(&mut scratch, *w, gw);
                    }
                    Op::Embed { table, ids } => {
                        let tv = &nodes[*table].value;
                        let d = tv.cols();
                        let mut gt = Tensor::zeros(tv.dims().to_vec());
                        for (j, &id) in ids.iter().enumerate() {
                            let grow = g.row(j);
                            let trow = &mut gt.data_mut()[id * d..(id + 1) * d];
                            for (t, &gv) in trow.iter_mut().zip(grow.iter()) {
                                *t += gv;
                            }
                        }
                        acc(&mut scratch, *table, gt);
                    }
                    Op::StackRows(rows) => {
                        for (r, &id) in rows.iter().enumerate() {
                            if nodes[id].requires_grad {
                                acc(&mut scratch, id, Tensor::vector(g.row(r).to_vec()));
                            }
                        }
                    }
                    Op::ConcatRows(parts) => {
                        let f = g.cols();
                        let mut at = 0;
                        for &p in parts {
                            let rows = nodes[p].value.rows();
                            if nodes[p].requires_grad {
                                let data = g.data()[at * f..(at + rows) * f].to_vec();
                                acc(
                                    &mut scratch,
                                    p,
                                    Tensor::new(vec![rows, f], data).expect("shape"),
                                );
                            }
                            at += rows;
                        }
                    }
                    Op::SliceRows { x, start } => {
                        let xv = &nodes[*x].value;
                        let f = xv.cols();
                        let mut gx = Tensor::zeros(xv.dims().to_vec());
                        let n = g.len();
                        gx.data_mut()[start * f..start * f + n].copy_from_slice(g.data());
                        acc(&mut scratch, *x, gx);
                    }
                    Op::GatherRows { x, idx } => {
                        let xv = &nodes[*x].value;
                        let f = xv.cols();
                        let mut gx = Tensor::zeros(xv.dims().to_vec());
                        for (j, &i2) in idx.iter().enumerate() {
                            let grow = g.row(j);
                            let xrow = &mut gx.data_mut()[i2 * f..(i2 + 1) * f];
                            for (t, &gv) in xrow.iter_mut().zip(grow.iter()) {
                                *t += gv;
                            }
                        }
                        acc(&mut scratch, *x, gx);
                    }
                    Op::Reshape(x) => {
                        let xv = &nodes[*x].value;
                        let gv = g.reshaped(xv.dims().to_vec()).expect("shape");
                        acc(&mut scratch, *x, gv);
                    }
                    Op::SumScalars(terms) => {
                        for &t in terms {
                            if nodes[t].requires_grad {
                                acc(&mut scratch, t, g.clone());
                            }
                        }
                    }
                    Op::SumAll(x) => {
                        let xv = &nodes[*x].value;
                        acc(&mut scratch, *x, Tensor::filled(xv.dims().to_vec(), g.item()));
                    }
                }
                scratch[i] = Some(g);
            }
        }

        for (node, adj) in self.nodes.iter_mut().zip(scratch.into_iter()) {
            if let (true, Some(a)) = (node.requires_grad, adj) {
                node.grad.add_assign(&a);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_grad, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn matmul_identity_case() {
        let mut t = Tape::new();
        let i2 = t.constant(Tensor::eye(2));
        let a = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let out = t.matmul(i2, a).unwrap();
        assert_eq!(t.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_basis_selection() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![2.0, 5.0]).unwrap());
        let out = t.matmul(a, b).unwrap();
        assert_eq!(t.value(out).data(), &[2.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let b = t.constant(Tensor::matrix(3, 1, vec![2.0, 5.0, 1.0]).unwrap());
        assert!(matches!(t.matmul(a, b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a0 = Tensor::uniform(vec![3, 3], -1.0, 1.0, &mut rng);
        let b0 = Tensor::uniform(vec![3, 3], -1.0, 1.0, &mut rng);

        let mut t = Tape::new();
        let a = t.leaf(a0.clone(), true);
        let b = t.constant(b0.clone());
        let m = t.matmul(a, b).unwrap();
        let loss = t.sum_all(m);
        t.backward(loss).unwrap();

        let report = check_grad(&a0, t.grad(a), FD_STEP, |probe| {
            let mut t2 = Tape::new();
            let a2 = t2.constant(probe.clone());
            let b2 = t2.constant(b0.clone());
            let m2 = t2.matmul(a2, b2).unwrap();
            let l2 = t2.sum_all(m2);
            t2.value(l2).item()
        });
        assert!(report.within(1e-6), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn conv_window_one_identity_filters() {
        let d = 3;
        let mut t = Tape::new();
        let x0 = Tensor::matrix(2, d, vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3]).unwrap();
        let x = t.constant(x0.clone());
        let f = t.constant(Tensor::eye(d));
        let b = t.constant(Tensor::zeros(vec![d]));
        let out = t.conv1d_seq(x, f, b, 1).unwrap();
        assert_eq!(t.value(out).data(), x0.data());
    }

    #[test]
    fn conv_single_token_padding() {
        // L=1, window=3: flanks are zero, only the middle filter block fires.
        let (d, f, w) = (2, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = Tensor::uniform(vec![1, d], -1.0, 1.0, &mut rng);
        let f0 = Tensor::uniform(vec![w * d, f], -1.0, 1.0, &mut rng);
        let b0 = Tensor::uniform(vec![f], -1.0, 1.0, &mut rng);

        let mut t = Tape::new();
        let x = t.constant(x0.clone());
        let fl = t.constant(f0.clone());
        let b = t.constant(b0.clone());
        let out = t.conv1d_seq(x, fl, b, w).unwrap();

        for c in 0..f {
            let mut expect = b0.data()[c];
            for k in 0..d {
                expect += x0.at(0, k) * f0.at(d + k, c);
            }
            approx(t.value(out).at(0, c), expect, 1e-12);
        }
    }

    #[test]
    fn conv_even_window_rejected() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(vec![2, 2]));
        let f = t.constant(Tensor::zeros(vec![4, 2]));
        let b = t.constant(Tensor::zeros(vec![2]));
        assert!(matches!(
            t.conv1d_seq(x, f, b, 2),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let (l, d, f, w) = (4, 3, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = Tensor::uniform(vec![l, d], -1.0, 1.0, &mut rng);
        let f0 = Tensor::uniform(vec![w * d, f], -1.0, 1.0, &mut rng);
        let b0 = Tensor::uniform(vec![f], -1.0, 1.0, &mut rng);

        let eval = |xv: &Tensor, fv: &Tensor, bv: &Tensor| {
            let mut t = Tape::new();
            let x = t.constant(xv.clone());
            let fl = t.constant(fv.clone());
            let b = t.constant(bv.clone());
            let out = t.conv1d_seq(x, fl, b, w).unwrap();
            let l = t.sum_all(out);
            t.value(l).item()
        };

        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let fl = t.leaf(f0.clone(), true);
        let b = t.leaf(b0.clone(), true);
        let out = t.conv1d_seq(x, fl, b, w).unwrap();
        let loss = t.sum_all(out);
        t.backward(loss).unwrap();

        let rx = check_grad(&x0, t.grad(x), FD_STEP, |p| eval(p, &f0, &b0));
        let rf = check_grad(&f0, t.grad(fl), FD_STEP, |p| eval(&x0, p, &b0));
        let rb = check_grad(&b0, t.grad(b), FD_STEP, |p| eval(&x0, &f0, p));
        assert!(rx.within(1e-6) && rf.within(1e-6) && rb.within(1e-6));
    }

    #[test]
    fn relu_and_softmax_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.0, 2.0]));
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0.0, 2.0]);

        let z = t.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let s = t.softmax_rows(z);
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let x0 = Tensor::vector(vec![0.0]);
        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let y = t.tanh_op(x);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        approx(t.grad(x).data()[0], 1.0, 1e-12);

        let report = check_grad(&x0, t.grad(x), FD_STEP, |p| {
            let mut t2 = Tape::new();
            let x2 = t2.constant(p.clone());
            let y2 = t2.tanh_op(x2);
            let l2 = t2.sum_all(y2);
            t2.value(l2).item()
        });
        assert!(report.within(1e-6));
    }

    #[test]
    fn max_pool_and_mean_rows() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let m = t.max_pool_rows(x).unwrap();
        assert_eq!(t.value(m).data(), &[3.0, 5.0]);

        let one = t.constant(Tensor::matrix(1, 3, vec![4.0, 5.0, 6.0]).unwrap());
        let mean = t.mean_rows(one).unwrap();
        assert_eq!(t.value(mean).data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn max_pool_tie_routes_to_first_row() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 1, vec![2.0, 2.0]).unwrap(), true);
        let m = t.max_pool_rows(x).unwrap();
        let loss = t.sum_all(m);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).data(), &[1.0, 0.0]);
    }

    #[test]
    fn weighted_sum_selects_and_averages() {
        let x0 = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(x0.clone());

        // One-hot on row 2 selects that row (up to the epsilon guard).
        let w = t.constant(Tensor::vector(vec![0.0, 0.0, 1.0]));
        let sel = t.weighted_sum_rows(x, w).unwrap();
        approx(t.value(sel).data()[0], 5.0, 1e-6);
        approx(t.value(sel).data()[1], 6.0, 1e-6);

        // Equal weights give the row mean.
        let u = t.constant(Tensor::vector(vec![0.7, 0.7, 0.7]));
        let avg = t.weighted_sum_rows(x, u).unwrap();
        approx(t.value(avg).data()[0], 3.0, 1e-6);
        approx(t.value(avg).data()[1], 4.0, 1e-6);
    }

    #[test]
    fn weighted_sum_rejects_negative_weights() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(vec![2, 2]));
        let w = t.constant(Tensor::vector(vec![0.5, -0.1]));
        assert!(matches!(
            t.weighted_sum_rows(x, w),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn weighted_sum_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);
        let w0 = Tensor::uniform(vec![4], 0.1, 1.0, &mut rng);

        let eval = |xv: &Tensor, wv: &Tensor| {
            let mut t = Tape::new();
            let x = t.constant(xv.clone());
            let w = t.constant(wv.clone());
            let out = t.weighted_sum_rows(x, w).unwrap();
            let l = t.sum_all(out);
            t.value(l).item()
        };

        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let w = t.leaf(w0.clone(), true);
        let out = t.weighted_sum_rows(x, w).unwrap();
        let loss = t.sum_all(out);
        t.backward(loss).unwrap();

        let rx = check_grad(&x0, t.grad(x), FD_STEP, |p| eval(p, &w0));
        let rw = check_grad(&w0, t.grad(w), FD_STEP, |p| eval(&x0, p));
        assert!(rx.within(1e-6) && rw.within(1e-6));
    }

    #[test]
    fn grad_reverse_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x0 = Tensor::uniform(vec![3], -1.0, 1.0, &mut rng);

        // Forward is the identity, bit for bit.
        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let y = t.grad_reverse(x, 0.7);
        assert_eq!(t.value(y).data(), x0.data());

        // Backward with rho=1 negates the upstream gradient exactly.
        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let y = t.grad_reverse(x, 1.0);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).data(), &[-1.0, -1.0, -1.0]);

        // rho=0 silences the parents entirely.
        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let y = t.grad_reverse(x, 0.0);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).data(), &[0.0, 0.0, 0.0]);

        // Parent gradient is exactly -rho times the upstream gradient.
        let rho = 0.37;
        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let y = t.grad_reverse(x, rho);
        let s = t.scale(y, 2.0);
        let loss = t.sum_all(s);
        t.backward(loss).unwrap();
        for &g in t.grad(x).data() {
            assert_eq!(g, -rho * 2.0);
        }
    }

    #[test]
    fn batch_norm_constant_column_outputs_beta() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap());
        let gamma = t.constant(Tensor::vector(vec![1.5, 1.5]));
        let beta = t.constant(Tensor::vector(vec![-0.25, -0.25]));
        let rm = Tensor::zeros(vec![2]);
        let rv = Tensor::filled(vec![2], 1.0);
        let (y, delta) = t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Train).unwrap();
        for r in 0..3 {
            approx(t.value(y).at(r, 0), -0.25, 1e-9);
        }
        // Running statistics move 10% toward the batch.
        let d = delta.unwrap();
        approx(d.running_mean.data()[0], 0.5, 1e-12);
        approx(d.running_var.data()[0], 0.9, 1e-12);
    }

    #[test]
    fn batch_norm_standardized_batch_is_near_identity() {
        // Mean 0, biased variance 1 per column; output differs from the
        // input only through the variance epsilon.
        let x0 = Tensor::matrix(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(x0.clone());
        let gamma = t.constant(Tensor::filled(vec![2], 1.0));
        let beta = t.constant(Tensor::zeros(vec![2]));
        let rm = Tensor::zeros(vec![2]);
        let rv = Tensor::filled(vec![2], 1.0);
        let (y, _) = t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Train).unwrap();
        for i in 0..4 {
            approx(t.value(y).data()[i], x0.data()[i], 1e-5);
        }
    }

    #[test]
    fn batch_norm_train_rejects_single_row() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let gamma = t.constant(Tensor::filled(vec![2], 1.0));
        let beta = t.constant(Tensor::zeros(vec![2]));
        let rm = Tensor::zeros(vec![2]);
        let rv = Tensor::filled(vec![2], 1.0);
        assert!(t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Train).is_err());
        // Eval mode is fine with one row.
        assert!(t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Eval).is_ok());
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x0 = Tensor::uniform(vec![5, 3], -1.0, 1.0, &mut rng);
        let g0 = Tensor::uniform(vec![3], 0.5, 1.5, &mut rng);
        let b0 = Tensor::uniform(vec![3], -0.5, 0.5, &mut rng);
        let rm = Tensor::zeros(vec![3]);
        let rv = Tensor::filled(vec![3], 1.0);

        // Squared distance to a fixed target so the upstream gradient varies
        // across the batch.
        let target = Tensor::uniform(vec![5, 3], -1.0, 1.0, &mut rng);
        let eval = |xv: &Tensor, gv: &Tensor, bv: &Tensor| {
            let mut t = Tape::new();
            let x = t.constant(xv.clone());
            let gamma = t.constant(gv.clone());
            let beta = t.constant(bv.clone());
            let (y, _) = t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Train).unwrap();
            let tgt = t.constant(target.clone());
            let l = t.squared_error(y, tgt).unwrap();
            t.value(l).item()
        };

        let mut t = Tape::new();
        let x = t.leaf(x0.clone(), true);
        let gamma = t.leaf(g0.clone(), true);
        let beta = t.leaf(b0.clone(), true);
        let (y, _) = t.batch_norm(x, gamma, beta, &rm, &rv, Mode::Train).unwrap();
        let tgt = t.constant(target.clone());
        let loss = t.squared_error(y, tgt).unwrap();
        t.backward(loss).unwrap();

        let rx = check_grad(&x0, t.grad(x), FD_STEP, |p| eval(p, &g0, &b0));
        let rg = check_grad(&g0, t.grad(gamma), FD_STEP, |p| eval(&x0, p, &b0));
        let rb = check_grad(&b0, t.grad(beta), FD_STEP, |p| eval(&x0, &g0, p));
        assert!(
            rx.within(1e-5) && rg.within(1e-5) && rb.within(1e-5),
            "x {} gamma {} beta {}",
            rx.max_rel_error,
            rg.max_rel_error,
            rb.max_rel_error
        );
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        // rate 0 and eval mode are both the identity (same node).
        assert_eq!(t.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.9, Mode::Eval, &mut rng).unwrap(), x);
        assert!(t.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_empirical_drop_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = Tape::new();
        let n = 100_000;
        let x = t.leaf(Tensor::filled(vec![n], 1.0), false);
        let y = t.dropout(x, 0.2, Mode::Train, &mut rng).unwrap();
        let zeroed = t.value(y).data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeroed as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.01, "drop fraction {frac}");
        // Survivors are scaled by 1/(1-rate).
        let survivor = t.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
        approx(*survivor, 1.0 / 0.8, 1e-12);
    }

    #[test]
    fn loss_values() {
        let mut t = Tape::new();
        // Perfect one-hot prediction: zero loss up to the log clamp.
        let p = t.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let y = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let ce = t.cross_entropy(p, y).unwrap();
        approx(t.value(ce).item(), 0.0, 1e-12);

        // Uniform prediction over two classes costs ln 2.
        let p = t.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let y = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let ce = t.cross_entropy(p, y).unwrap();
        approx(t.value(ce).item(), std::f64::consts::LN_2, 1e-12);

        let w = t.constant(Tensor::eye(4));
        let f = t.frob_dev_from_identity(w).unwrap();
        assert_eq!(t.value(f).item(), 0.0);
    }

    #[test]
    fn cross_entropy_rejects_non_distribution() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::matrix(1, 2, vec![0.9, 0.3]).unwrap());
        let y = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            t.cross_entropy(p, y),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap(), true);
        let loss = t.sum_all(x);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_diamond_accumulates() {
        // y = relu(x) + tanh(x); at x > 0, dy/dx = 1 + (1 - tanh(x)^2).
        let x0 = 0.8;
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![x0]), true);
        let a = t.relu(x);
        let b = t.tanh_op(x);
        let y = t.add(a, b).unwrap();
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        let expect = 1.0 + (1.0 - x0.tanh() * x0.tanh());
        approx(t.grad(x).data()[0], expect, 1e-12);
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.3, -0.4]), true);
        let y = t.tanh_op(x);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        let first: Vec<f64> = t.grad(x).data().to_vec();
        t.backward(loss).unwrap();
        for (a, b) in t.grad(x).data().iter().zip(first.iter()) {
            approx(*a, 2.0 * b, 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = t.relu(x);
        assert!(matches!(t.backward(y), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn embed_gradient_scatter_adds() {
        let table0 = Tensor::matrix(3, 2, vec![0.0, 0.1, 1.0, 1.1, 2.0, 2.1]).unwrap();
        let mut t = Tape::new();
        let table = t.leaf(table0.clone(), true);
        let out = t.embed(table, &[1, 1, 2]).unwrap();
        assert_eq!(t.value(out).row(0), &[1.0, 1.1]);
        let loss = t.sum_all(out);
        t.backward(loss).unwrap();
        // Row 1 appears twice, row 0 never.
        assert_eq!(t.grad(table).row(0), &[0.0, 0.0]);
        assert_eq!(t.grad(table).row(1), &[2.0, 2.0]);
        assert_eq!(t.grad(table).row(2), &[1.0, 1.0]);
    }

    #[test]
    fn structural_ops_roundtrip_gradients() {
        // stack -> slice -> gather -> reshape pipeline, FD checked end to end.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v0 = Tensor::uniform(vec![3], -1.0, 1.0, &mut rng);
        let v1 = Tensor::uniform(vec![3], -1.0, 1.0, &mut rng);

        let eval = |a: &Tensor, b: &Tensor| {
            let mut t = Tape::new();
            let x0 = t.constant(a.clone());
            let x1 = t.constant(b.clone());
            let st = t.stack_rows(&[x0, x1, x0]).unwrap();
            let sl = t.slice_rows(st, 1, 2).unwrap();
            let ga = t.gather_rows(sl, &[1, 1, 0]).unwrap();
            let rs = t.reshape(ga, vec![9]).unwrap();
            let tn = t.tanh_op(rs);
            let l = t.sum_all(tn);
            t.value(l).item()
        };

        let mut t = Tape::new();
        let x0 = t.leaf(v0.clone(), true);
        let x1 = t.leaf(v1.clone(), true);
        let st = t.stack_rows(&[x0, x1, x0]).unwrap();
        let sl = t.slice_rows(st, 1, 2).unwrap();
        let ga = t.gather_rows(sl, &[1, 1, 0]).unwrap();
        let rs = t.reshape(ga, vec![9]).unwrap();
        let tn = t.tanh_op(rs);
        let loss = t.sum_all(tn);
        t.backward(loss).unwrap();

        let r0 = check_grad(&v0, t.grad(x0), FD_STEP, |p| eval(p, &v1));
        let r1 = check_grad(&v1, t.grad(x1), FD_STEP, |p| eval(&v0, p));
        assert!(r0.within(1e-6) && r1.within(1e-6));
    }

    #[test]
    fn every_op_matches_finite_differences() {
        // Blanket check at the spec tolerance (1e-4, absolute floor 1e-8)
        // with inputs nudged away from relu/max kinks. Gradient reversal is
        // excluded: its backward is intentionally not the derivative of its
        // forward and is checked exactly elsewhere.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x0 = {
            let mut x = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);
            for v in x.data_mut() {
                if v.abs() < 1e-2 {
                    *v += 0.05;
                }
            }
            x
        };
        let y0 = Tensor::uniform(vec![4, 3], -1.0, 1.0, &mut rng);

        type Builder = fn(&mut Tape, NodeId, NodeId) -> NodeId;
        let cases: Vec<(&str, Builder)> = vec![
            ("add", |t, x, y| t.add(x, y).unwrap()),
            ("scale", |t, x, _| t.scale(x, -1.7)),
            ("relu", |t, x, _| t.relu(x)),
            ("tanh", |t, x, _| t.tanh_op(x)),
            ("clamp_upper", |t, x, _| t.clamp_upper(x, 0.5)),
            ("softmax_rows", |t, x, _| t.softmax_rows(x)),
            ("mean_rows", |t, x, _| t.mean_rows(x).unwrap()),
            ("max_pool_rows", |t, x, _| t.max_pool_rows(x).unwrap()),
            ("squared_error", |t, x, y| t.squared_error(x, y).unwrap()),
            ("sum_all", |t, x, _| t.sum_all(x)),
        ];

        for (name, build) in cases {
            let eval = |p: &Tensor| {
                let mut t = Tape::new();
                let x = t.constant(p.clone());
                let y = t.constant(y0.clone());
                let out = build(&mut t, x, y);
                if t.value(out).is_scalar() {
                    t.value(out).item()
                } else {
                    let l = t.sum_all(out);
                    t.value(l).item()
                }
            };
            let mut t = Tape::new();
            let x = t.leaf(x0.clone(), true);
            let y = t.constant(y0.clone());
            let out = build(&mut t, x, y);
            let loss = if t.value(out).is_scalar() {
                out
            } else {
                t.sum_all(out)
            };
            t.backward(loss).unwrap();
            let report = check_grad(&x0, t.grad(x), FD_STEP, eval);
            assert!(
                report.within(1e-4),
                "{name}: max rel err {} (analytic {}, numeric {})",
                report.max_rel_error,
                report.analytic_at_worst,
                report.numeric_at_worst
            );
        }
    }

    #[test]
    fn softmax_through_cross_entropy_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z0 = Tensor::uniform(vec![3, 4], -1.0, 1.0, &mut rng);
        let mut y = Tensor::zeros(vec![3, 4]);
        for r in 0..3 {
            *y.at_mut(r, r) = 1.0;
        }

        let eval = |p: &Tensor| {
            let mut t = Tape::new();
            let z = t.constant(p.clone());
            let s = t.softmax_rows(z);
            let l = t.cross_entropy(s, y.clone()).unwrap();
            t.value(l).item()
        };

        let mut t = Tape::new();
        let z = t.leaf(z0.clone(), true);
        let s = t.softmax_rows(z);
        let loss = t.cross_entropy(s, y.clone()).unwrap();
        t.backward(loss).unwrap();
        let report = check_grad(&z0, t.grad(z), FD_STEP, eval);
        assert!(report.within(1e-6), "max rel err {}", report.max_rel_error);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_rows_always_sum_to_one(
                vals in proptest::collection::vec(-30.0f64..30.0, 8)
            ) {
                let mut t = Tape::new();
                let x = t.constant(Tensor::matrix(2, 4, vals).unwrap());
                let s = t.softmax_rows(x);
                for r in 0..2 {
                    let sum: f64 = t.value(s).row(r).iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn weighted_sum_invariant_to_weight_rescaling(
                w in proptest::collection::vec(0.25f64..2.0, 4),
                c in 0.1f64..50.0
            ) {
                // Sum of weights is at least 1, so the epsilon guard is
                // negligible and the pooled vector only sees w's direction.
                let x0 = Tensor::matrix(4, 2, vec![
                    0.3, -1.2, 0.8, 0.4, -0.6, 1.9, 2.2, -0.1,
                ]).unwrap();
                let mut t = Tape::new();
                let x = t.constant(x0);
                let w1 = t.constant(Tensor::vector(w.clone()));
                let w2 = t.constant(Tensor::vector(w.iter().map(|v| v * c).collect()));
                let a = t.weighted_sum_rows(x, w1).unwrap();
                let b = t.weighted_sum_rows(x, w2).unwrap();
                for i in 0..2 {
                    prop_assert!((t.value(a).data()[i] - t.value(b).data()[i]).abs() < 1e-6);
                }
            }

            #[test]
            fn cross_entropy_is_nonnegative(
                z in proptest::collection::vec(-20.0f64..20.0, 3),
                class in 0usize..3
            ) {
                let mut t = Tape::new();
                let zn = t.constant(Tensor::matrix(1, 3, z).unwrap());
                let p = t.softmax_rows(zn);
                let mut y = Tensor::zeros(vec![1, 3]);
                *y.at_mut(0, class) = 1.0;
                let ce = t.cross_entropy(p, y).unwrap();
                prop_assert!(t.value(ce).item() >= 0.0);
            }
        }
    }
}
