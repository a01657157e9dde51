use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{NumericsError, Tensor};
use crate::math;
use crate::rng;

/// Target value marking a position that cross-entropy must skip.
pub const IGNORE_INDEX: usize = usize::MAX;

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

// GELU tanh form constants.
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    RowSoftmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(NodeId),
    EmbeddingLookup {
        table: NodeId,
        ids: Vec<usize>,
    },
    MeanRows {
        x: NodeId,
        mask: Vec<bool>,
        count: usize,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
        width: usize,
    },
    L2NormalizeRows {
        x: NodeId,
        inv_norms: Vec<f64>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<f64>,
        counted: usize,
    },
    Sum(NodeId),
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Tape of op records in topological order. One forward/backward pass per
/// graph; training builds a fresh tape each step.
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
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

    /// Gradient buffer of a node, available after backward().
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push_unchecked(value, Op::Leaf, requires_grad)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn op_requires_grad(&self, op: &Op) -> bool {
        let needs = |id: &NodeId| self.nodes[id.0].requires_grad;
        match op {
            Op::Leaf => false,
            Op::Matmul(a, b) | Op::Add(a, b) | Op::AddRowBias(a, b) | Op::Mul(a, b) => {
                needs(a) || needs(b)
            }
            Op::Scale(x, _)
            | Op::Transpose(x)
            | Op::RowSoftmax(x)
            | Op::Gelu(x)
            | Op::Sum(x)
            | Op::EmbeddingLookup { table: x, .. }
            | Op::MeanRows { x, .. }
            | Op::Dropout { x, .. }
            | Op::SliceCols { x, .. }
            | Op::L2NormalizeRows { x, .. }
            | Op::CrossEntropy { logits: x, .. } => needs(x),
            Op::LayerNorm { x, gamma, beta, .. } => needs(x) || needs(gamma) || needs(beta),
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.iter().any(needs),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId, NumericsError> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite(name));
        }
        let requires_grad = self.op_requires_grad(&op);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn shape_err(what: &str, a: &[usize], b: &[usize]) -> NumericsError {
        NumericsError::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
    }

    /// C[m,n] = A[m,k] · B[k,n].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.rows() {
            return Err(Self::shape_err("matmul", va.shape(), vb.shape()));
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = va.data()[i * k + p];
                let brow = &vb.data()[p * n..(p + 1) * n];
                let crow = &mut out[i * n..(i + 1) * n];
                for (c, &bv) in crow.iter_mut().zip(brow) {
                    *c += aip * bv;
                }
            }
        }
        self.push(Tensor::matrix(m, n, out)?, Op::Matmul(a, b), "matmul")
    }

    /// Elementwise sum of same-shape tensors, or `[m,n] + [n]` row bias.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() == vb.shape() {
            let data = va
                .data()
                .iter()
                .zip(vb.data())
                .map(|(x, y)| x + y)
                .collect();
            let t = Tensor::new(va.shape(), data)?;
            return self.push(t, Op::Add(a, b), "add");
        }
        // Row-broadcast bias: [m,n] + [n].
        if va.shape().len() == 2 && vb.shape().len() == 1 && va.cols() == vb.cols() {
            let (m, n) = (va.rows(), va.cols());
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    data.push(va.data()[i * n + j] + vb.data()[j]);
                }
            }
            let t = Tensor::matrix(m, n, data)?;
            return self.push(t, Op::AddRowBias(a, b), "add");
        }
        Err(Self::shape_err("add", va.shape(), vb.shape()))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Self::shape_err("mul", va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(va.shape(), data)?;
        self.push(t, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, NumericsError> {
        if !factor.is_finite() {
            return Err(NumericsError::InvalidValue(format!(
                "scale factor {factor} is not finite"
            )));
        }
        let vx = &self.nodes[x.0].value;
        let data = vx.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(vx.shape(), data)?;
        self.push(t, Op::Scale(x, factor), "scale")
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        if vx.shape().len() != 2 {
            return Err(Self::shape_err("transpose", vx.shape(), &[]));
        }
        let (m, n) = (vx.rows(), vx.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = vx.data()[i * n + j];
            }
        }
        self.push(Tensor::matrix(n, m, data)?, Op::Transpose(x), "transpose")
    }

    /// Softmax over the innermost dimension, per row.
    pub fn row_softmax(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        let (m, n) = (vx.rows(), vx.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &vx.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = math::exp(row[j] - max);
                data[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                data[i * n + j] /= sum;
            }
        }
        let t = Tensor::new(vx.shape(), data)?;
        self.push(t, Op::RowSoftmax(x), "row_softmax")
    }

    /// Per-row normalization with learnable scale and shift: `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId, NumericsError> {
        let (vx, vg, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        let (m, n) = (vx.rows(), vx.cols());
        if vg.shape() != [n] || vb.shape() != [n] {
            return Err(Self::shape_err("layer_norm", vx.shape(), vg.shape()));
        }
        if eps <= 0.0 {
            return Err(NumericsError::InvalidValue(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &vx.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / math::sqrt(var + eps);
            inv_std[i] = istd;
            for j in 0..n {
                let xhat = (row[j] - mean) * istd;
                normalized[i * n + j] = xhat;
                data[i * n + j] = vg.data()[j] * xhat + vb.data()[j];
            }
        }
        let t = Tensor::new(vx.shape(), data)?;
        self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            "layer_norm",
        )
    }

    /// GELU activation (tanh form).
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        let data = vx.data().iter().map(|&v| gelu_scalar(v)).collect();
        let t = Tensor::new(vx.shape(), data)?;
        self.push(t, Op::Gelu(x), "gelu")
    }

    /// Gather rows of `table` at `ids`, producing `[len(ids), cols]`.
    pub fn embedding_lookup(
        &mut self,
        table: NodeId,
        ids: &[usize],
    ) -> Result<NodeId, NumericsError> {
        let vt = &self.nodes[table.0].value;
        if vt.shape().len() != 2 {
            return Err(Self::shape_err("embedding_lookup", vt.shape(), &[]));
        }
        if ids.is_empty() {
            return Err(NumericsError::InvalidValue(
                "embedding_lookup with no ids".into(),
            ));
        }
        let (rows, cols) = (vt.rows(), vt.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NumericsError::InvalidValue(format!(
                    "embedding id {id} out of range (table has {rows} rows)"
                )));
            }
            data.extend_from_slice(&vt.data()[id * cols..(id + 1) * cols]);
        }
        let t = Tensor::matrix(ids.len(), cols, data)?;
        self.push(
            t,
            Op::EmbeddingLookup {
                table,
                ids: ids.to_vec(),
            },
            "embedding_lookup",
        )
    }

    /// Arithmetic mean over the rows selected by `mask`, producing `[1, cols]`.
    pub fn mean_rows(&mut self, x: NodeId, mask: &[bool]) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        let (m, n) = (vx.rows(), vx.cols());
        if mask.len() != m {
            return Err(Self::shape_err("mean_rows", vx.shape(), &[mask.len()]));
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(NumericsError::InvalidValue(
                "mean_rows mask selects no rows".into(),
            ));
        }
        let mut data = vec![0.0; n];
        for i in 0..m {
            if mask[i] {
                for j in 0..n {
                    data[j] += vx.data()[i * n + j];
                }
            }
        }
        for v in &mut data {
            *v /= count as f64;
        }
        let t = Tensor::matrix(1, n, data)?;
        self.push(
            t,
            Op::MeanRows {
                x,
                mask: mask.to_vec(),
                count,
            },
            "mean_rows",
        )
    }

    /// Inverted dropout with a stateless counter-based mask: elements are
    /// zeroed with probability `p` and survivors scaled by `1/(1-p)`.
    /// `p = 0` is the exact identity; a fixed seed gives a fixed mask.
    pub fn dropout(&mut self, x: NodeId, p: f64, seed: u64) -> Result<NodeId, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::InvalidValue(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        let vx = &self.nodes[x.0].value;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..vx.len())
            .map(|i| {
                if p > 0.0 && rng::index_uniform(seed, i as u64) < p {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = vx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(vx.shape(), data)?;
        self.push(t, Op::Dropout { x, mask }, "dropout")
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidValue("concat of zero tensors".into()));
        }
        let n = self.nodes[parts[0].0].value.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != n {
                return Err(Self::shape_err("concat_rows", v.shape(), &[n]));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let t = Tensor::matrix(rows, n, data)?;
        self.push(t, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Stack matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidValue("concat of zero tensors".into()));
        }
        let m = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p.0].value.cols()).sum();
        let mut data = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.rows() != m {
                return Err(Self::shape_err("concat_cols", v.shape(), &[m]));
            }
            let w = v.cols();
            for i in 0..m {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&v.data()[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let t = Tensor::matrix(m, total, data)?;
        self.push(t, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    /// Contiguous column window `[m, width]` starting at `start`.
    pub fn slice_cols(
        &mut self,
        x: NodeId,
        start: usize,
        width: usize,
    ) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        let (m, n) = (vx.rows(), vx.cols());
        if width == 0 || start + width > n {
            return Err(NumericsError::InvalidValue(format!(
                "slice_cols [{start}, {}) out of 0..{n}",
                start + width
            )));
        }
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&vx.data()[i * n + start..i * n + start + width]);
        }
        let t = Tensor::matrix(m, width, data)?;
        self.push(t, Op::SliceCols { x, start, width }, "slice_cols")
    }

    /// Scale each row to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[x.0].value;
        let (m, n) = (vx.rows(), vx.cols());
        let mut inv_norms = vec![0.0; m];
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &vx.data()[i * n..(i + 1) * n];
            let norm = math::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            if norm == 0.0 {
                return Err(NumericsError::InvalidValue(
                    "l2_normalize_rows on a zero row".into(),
                ));
            }
            let inv = 1.0 / norm;
            inv_norms[i] = inv;
            for j in 0..n {
                data[i * n + j] = row[j] * inv;
            }
        }
        let t = Tensor::new(vx.shape(), data)?;
        self.push(t, Op::L2NormalizeRows { x, inv_norms }, "l2_normalize_rows")
    }

    /// Mean negative log-softmax over rows whose target is not
    /// [`IGNORE_INDEX`]. Produces a scalar.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, NumericsError> {
        let vx = &self.nodes[logits.0].value;
        let (m, n) = (vx.rows(), vx.cols());
        if targets.len() != m {
            return Err(Self::shape_err("cross_entropy", vx.shape(), &[targets.len()]));
        }
        let mut probs = vec![0.0; m * n];
        let mut counted = 0usize;
        let mut loss = 0.0;
        for i in 0..m {
            let row = &vx.data()[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = math::exp(row[j] - max);
                probs[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                probs[i * n + j] /= sum;
            }
            let t = targets[i];
            if t == IGNORE_INDEX {
                continue;
            }
            if t >= n {
                return Err(NumericsError::InvalidValue(format!(
                    "cross_entropy target {t} out of range 0..{n}"
                )));
            }
            counted += 1;
            loss += -(math::ln(probs[i * n + t]));
        }
        if counted == 0 {
            return Err(NumericsError::InvalidValue(
                "cross_entropy with every target ignored".into(),
            ));
        }
        loss /= counted as f64;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                counted,
            },
            "cross_entropy",
        )
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let total = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), "sum")
    }

    /// Reverse-mode sweep from a scalar loss node. Fills the gradient buffer
    /// of every node on the tape; a second call on the same tape is rejected.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        if self.consumed {
            return Err(NumericsError::GraphConsumed);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumericsError::NotScalar);
        }
        self.consumed = true;
        // Gradients flow only through subgraphs rooted in grad-enabled
        // leaves; everything else stays untouched.
        for node in &mut self.nodes {
            if node.requires_grad {
                node.grad = Some(vec![0.0; node.value.len()]);
            }
        }
        if let Some(g) = self.nodes[loss.0].grad.as_mut() {
            g[0] = 1.0;
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(gout) = self.nodes[idx].grad.clone() else {
                continue;
            };
            if gout.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.accumulate(idx, &gout)?;
        }

        for node in &self.nodes {
            if node
                .grad
                .as_ref()
                .is_some_and(|g| g.iter().any(|v| !v.is_finite()))
            {
                return Err(NumericsError::NonFinite("backward"));
            }
        }
        Ok(())
    }

    fn add_grad(&mut self, id: NodeId, delta: &[f64]) {
        if let Some(g) = self.nodes[id.0].grad.as_mut() {
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
    }

    fn accumulate(&mut self, idx: usize, gout: &[f64]) -> Result<(), NumericsError> {
        // Clones keep the borrow checker happy; tensors here are desk-scale.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let va = self.nodes[a.0].value.clone();
                let vb = self.nodes[b.0].value.clone();
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.nodes[a.0].grad.is_some() {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gout[i * n + j] * vb.data()[p * n + j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    self.add_grad(a, &da);
                }
                if self.nodes[b.0].grad.is_some() {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for i in 0..m {
                            let aip = va.data()[i * k + p];
                            for j in 0..n {
                                db[p * n + j] += aip * gout[i * n + j];
                            }
                        }
                    }
                    self.add_grad(b, &db);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, gout);
                self.add_grad(b, gout);
            }
            Op::AddRowBias(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, gout);
                let n = self.nodes[b.0].value.len();
                let mut db = vec![0.0; n];
                for (i, g) in gout.iter().enumerate() {
                    db[i % n] += g;
                }
                self.add_grad(b, &db);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let va = self.nodes[a.0].value.clone();
                let vb = self.nodes[b.0].value.clone();
                let da: Vec<f64> = gout.iter().zip(vb.data()).map(|(g, v)| g * v).collect();
                let db: Vec<f64> = gout.iter().zip(va.data()).map(|(g, v)| g * v).collect();
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Scale(x, factor) => {
                let (x, factor) = (*x, *factor);
                let dx: Vec<f64> = gout.iter().map(|g| g * factor).collect();
                self.add_grad(x, &dx);
            }
            Op::Transpose(x) => {
                let x = *x;
                // Output is [n, m]; scatter back to [m, n].
                let (m, n) = (self.nodes[x.0].value.rows(), self.nodes[x.0].value.cols());
                let mut dx = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        dx[i * n + j] = gout[j * m + i];
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::RowSoftmax(x) => {
                let x = *x;
                let y = self.nodes[idx].value.clone();
                let (m, n) = (y.rows(), y.cols());
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let yrow = &y.data()[i * n..(i + 1) * n];
                    let grow = &gout[i * n..(i + 1) * n];
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] = yrow[j] * (grow[j] - dot);
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let normalized = normalized.clone();
                let inv_std = inv_std.clone();
                let vg = self.nodes[gamma.0].value.clone();
                let (m, n) = (
                    self.nodes[x.0].value.rows(),
                    self.nodes[x.0].value.cols(),
                );
                let mut dgamma = vec![0.0; n];
                let mut dbeta = vec![0.0; n];
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let grow = &gout[i * n..(i + 1) * n];
                    let xhat = &normalized[i * n..(i + 1) * n];
                    let mut mean_g = 0.0;
                    let mut mean_gx = 0.0;
                    for j in 0..n {
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                        let g = grow[j] * vg.data()[j];
                        mean_g += g;
                        mean_gx += g * xhat[j];
                    }
                    mean_g /= n as f64;
                    mean_gx /= n as f64;
                    for j in 0..n {
                        let g = grow[j] * vg.data()[j];
                        dx[i * n + j] = inv_std[i] * (g - mean_g - xhat[j] * mean_gx);
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::Gelu(x) => {
                let x = *x;
                let vx = self.nodes[x.0].value.clone();
                let dx: Vec<f64> = gout
                    .iter()
                    .zip(vx.data())
                    .map(|(g, &v)| g * gelu_derivative(v))
                    .collect();
                self.add_grad(x, &dx);
            }
            Op::EmbeddingLookup { table, ids } => {
                let table = *table;
                if self.nodes[table.0].grad.is_some() {
                    let ids = ids.clone();
                    let cols = self.nodes[table.0].value.cols();
                    let mut dt = vec![0.0; self.nodes[table.0].value.len()];
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..cols {
                            dt[id * cols + j] += gout[row * cols + j];
                        }
                    }
                    self.add_grad(table, &dt);
                }
            }
            Op::MeanRows { x, mask, count } => {
                let (x, count) = (*x, *count);
                let mask = mask.clone();
                let (m, n) = (
                    self.nodes[x.0].value.rows(),
                    self.nodes[x.0].value.cols(),
                );
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    if mask[i] {
                        for j in 0..n {
                            dx[i * n + j] = gout[j] / count as f64;
                        }
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let dx: Vec<f64> = gout.iter().zip(mask).map(|(g, m)| g * m).collect();
                self.add_grad(x, &dx);
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    let dx = gout[offset..offset + len].to_vec();
                    self.add_grad(p, &dx);
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let m = self.nodes[parts[0].0].value.rows();
                let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    let mut dx = vec![0.0; m * w];
                    for i in 0..m {
                        dx[i * w..(i + 1) * w]
                            .copy_from_slice(&gout[i * total + offset..i * total + offset + w]);
                    }
                    self.add_grad(p, &dx);
                    offset += w;
                }
            }
            Op::SliceCols { x, start, width } => {
                let (x, start, width) = (*x, *start, *width);
                let (m, n) = (
                    self.nodes[x.0].value.rows(),
                    self.nodes[x.0].value.cols(),
                );
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + start + width]
                        .copy_from_slice(&gout[i * width..(i + 1) * width]);
                }
                self.add_grad(x, &dx);
            }
            Op::L2NormalizeRows { x, inv_norms } => {
                let x = *x;
                let inv_norms = inv_norms.clone();
                let y = self.nodes[idx].value.clone();
                let (m, n) = (y.rows(), y.cols());
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let yrow = &y.data()[i * n..(i + 1) * n];
                    let grow = &gout[i * n..(i + 1) * n];
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[i * n + j] = inv_norms[i] * (grow[j] - yrow[j] * dot);
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                counted,
            } => {
                let (logits, counted) = (*logits, *counted);
                let targets = targets.clone();
                let probs = probs.clone();
                let n = self.nodes[logits.0].value.cols();
                let go = gout[0];
                let mut dx = vec![0.0; probs.len()];
                for (i, &t) in targets.iter().enumerate() {
                    if t == IGNORE_INDEX {
                        continue;
                    }
                    for j in 0..n {
                        let indicator = if j == t { 1.0 } else { 0.0 };
                        dx[i * n + j] = go * (probs[i * n + j] - indicator) / counted as f64;
                    }
                }
                self.add_grad(logits, &dx);
            }
            Op::Sum(x) => {
                let x = *x;
                let dx = vec![gout[0]; self.nodes[x.0].value.len()];
                self.add_grad(x, &dx);
            }
        }
        Ok(())
    }
}

#[inline]
fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + math::tanh(u))
}

#[inline]
fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = math::tanh(u);
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
