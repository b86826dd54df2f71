use crate::tensor::Tensor;
use crate::{c, Scalar, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add { a: usize, b: usize },
    AddBroadcast { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: T },
    MatMul { a: usize, b: usize },
    Linear { x: usize, w: usize, b: usize },
    TransposeLast2 { a: usize },
    SliceLast { a: usize, start: usize, len: usize },
    ConcatLast { parts: Vec<usize> },
    Gelu { a: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: T },
    MaskedSoftmax { x: usize },
    MeanPoolMasked { x: usize, mask: Vec<T> },
    MseLoss { pred: usize, target: usize },
    CrossEntropyLoss { logits: usize, classes: Vec<usize> },
    SumAll { a: usize },
    MeanAll { a: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients produced by one backward sweep, indexed by tape node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> &[T] {
        &self.grads[var.0]
    }
}

/// Records forward operations in topological order; every node's parents
/// precede it, so one reverse sweep visits each node exactly once.
///
/// A tape is built per forward pass and consumed by [`Tape::backward`];
/// calling backward twice is an error.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
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

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Value of a scalar node.
    pub fn scalar_value(&self, var: Var) -> T {
        debug_assert_eq!(self.value(var).numel(), 1);
        self.value(var).data()[0]
    }

    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
        });
        Var(id)
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite(name));
        }
        let value = Tensor::new(shape, data)?;
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        Ok(Var(id))
    }

    // ---- elementwise and broadcast ops ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(
                "add",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push("add", ta.shape().to_vec(), data, Op::Add { a: a.0, b: b.0 })
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s shape (bias rows,
    /// positional tables, ...); `b` is tiled over the leading extents.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sb.len() > sa.len() || &sa[sa.len() - sb.len()..] != sb {
            return Err(TensorError::shape(
                "add_broadcast",
                format!("{sb:?} is not a suffix of {sa:?}"),
            ));
        }
        let bn = tb.numel();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data()[i % bn])
            .collect();
        self.push(
            "add_broadcast",
            sa.to_vec(),
            data,
            Op::AddBroadcast { a: a.0, b: b.0 },
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(
                "sub",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        self.push("sub", ta.shape().to_vec(), data, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(
                "mul",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push("mul", ta.shape().to_vec(), data, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * factor).collect();
        self.push(
            "scale",
            ta.shape().to_vec(),
            data,
            Op::Scale { a: a.0, factor },
        )
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| gelu_forward(x)).collect();
        self.push("gelu", ta.shape().to_vec(), data, Op::Gelu { a: a.0 })
    }

    // ---- matrix products ----

    /// Matrix product for 2-d operands, or batched over one leading extent
    /// for 3-d operands. Gradients: dA = dC·Bᵀ, dB = Aᵀ·dC per batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        let (batch, m, k, n) = match (sa.len(), sb.len()) {
            (2, 2) => {
                if sa[1] != sb[0] {
                    return Err(TensorError::shape(
                        "matmul",
                        format!("inner extents {} vs {}", sa[1], sb[0]),
                    ));
                }
                (1, sa[0], sa[1], sb[1])
            }
            (3, 3) => {
                if sa[0] != sb[0] || sa[2] != sb[1] {
                    return Err(TensorError::shape(
                        "matmul",
                        format!("{sa:?} vs {sb:?}"),
                    ));
                }
                (sa[0], sa[1], sa[2], sb[2])
            }
            _ => {
                return Err(TensorError::shape(
                    "matmul",
                    format!("rank {} vs {}", sa.len(), sb.len()),
                ))
            }
        };
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            mm_acc(
                &mut out[bi * m * n..(bi + 1) * m * n],
                &ta.data()[bi * m * k..(bi + 1) * m * k],
                &tb.data()[bi * k * n..(bi + 1) * k * n],
                m,
                k,
                n,
            );
        }
        let shape = if sa.len() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        self.push("matmul", shape, out, Op::MatMul { a: a.0, b: b.0 })
    }

    /// Affine map over the last axis: `[..., in] -> [..., out]` via
    /// `x·w + b` with `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tw.rank() != 2 || tb.rank() != 1 {
            return Err(TensorError::shape(
                "linear",
                format!("weight rank {} bias rank {}", tw.rank(), tb.rank()),
            ));
        }
        let (d_in, d_out) = (tw.shape()[0], tw.shape()[1]);
        if tx.last_extent() != d_in || tb.shape()[0] != d_out {
            return Err(TensorError::shape(
                "linear",
                format!(
                    "x last {} vs w {:?} vs b {:?}",
                    tx.last_extent(),
                    tw.shape(),
                    tb.shape()
                ),
            ));
        }
        let rows = tx.row_count();
        let mut out = vec![T::zero(); rows * d_out];
        mm_acc(&mut out, tx.data(), tw.data(), rows, d_in, d_out);
        for r in 0..rows {
            for j in 0..d_out {
                out[r * d_out + j] += tb.data()[j];
            }
        }
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        self.push(
            "linear",
            shape,
            out,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.0,
            },
        )
    }

    pub fn transpose_last2(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if ta.rank() < 2 {
            return Err(TensorError::shape("transpose_last2", "rank < 2"));
        }
        let shape = ta.shape();
        let (r, c_) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = ta.numel() / (r * c_);
        let mut out = vec![T::zero(); ta.numel()];
        for bi in 0..batch {
            let src = &ta.data()[bi * r * c_..(bi + 1) * r * c_];
            let dst = &mut out[bi * r * c_..(bi + 1) * r * c_];
            for i in 0..r {
                for j in 0..c_ {
                    dst[j * r + i] = src[i * c_ + j];
                }
            }
        }
        let mut new_shape = shape.to_vec();
        let len = new_shape.len();
        new_shape.swap(len - 2, len - 1);
        self.push(
            "transpose_last2",
            new_shape,
            out,
            Op::TransposeLast2 { a: a.0 },
        )
    }

    /// Slice `[start, start+len)` out of the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let last = ta.last_extent();
        if len == 0 || start + len > last {
            return Err(TensorError::shape(
                "slice_last",
                format!("[{start}, {start}+{len}) out of 0..{last}"),
            ));
        }
        let rows = ta.row_count();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&ta.data()[r * last + start..r * last + start + len]);
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        self.push(
            "slice_last",
            shape,
            out,
            Op::SliceLast {
                a: a.0,
                start,
                len,
            },
        )
    }

    /// Concatenate along the last axis.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::shape("concat_last", "no parts"));
        }
        let lead = self.value(parts[0]).shape()[..self.value(parts[0]).rank() - 1].to_vec();
        let mut total_last = 0;
        for &p in parts {
            let tp = self.value(p);
            if tp.shape()[..tp.rank() - 1] != lead[..] {
                return Err(TensorError::shape(
                    "concat_last",
                    format!("leading extents differ: {:?}", tp.shape()),
                ));
            }
            total_last += tp.last_extent();
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total_last);
        for r in 0..rows {
            for &p in parts {
                let tp = self.value(p);
                let last = tp.last_extent();
                out.extend_from_slice(&tp.data()[r * last..(r + 1) * last]);
            }
        }
        let mut shape = lead;
        shape.push(total_last);
        self.push(
            "concat_last",
            shape,
            out,
            Op::ConcatLast {
                parts: parts.iter().map(|v| v.0).collect(),
            },
        )
    }

    // ---- normalization and attention ----

    /// Per-row layer normalization over the last axis followed by the
    /// affine `gamma * xhat + beta`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> Result<Var, TensorError> {
        if eps <= T::zero() {
            return Err(TensorError::shape("layer_norm", "eps must be positive"));
        }
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = tx.last_extent();
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(TensorError::shape(
                "layer_norm",
                format!("gamma {:?} beta {:?} vs width {d}", tg.shape(), tb.shape()),
            ));
        }
        let rows = tx.row_count();
        let mut out = vec![T::zero(); tx.numel()];
        let dt = c::<T>(d as f64);
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / dt;
            let var = row
                .iter()
                .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                / dt;
            let inv_sd = (var + eps).sqrt().recip();
            for j in 0..d {
                out[r * d + j] = (row[j] - mean) * inv_sd * tg.data()[j] + tb.data()[j];
            }
        }
        self.push(
            "layer_norm",
            tx.shape().to_vec(),
            out,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                eps,
            },
        )
    }

    /// Softmax over the last axis with an additive -inf mask: positions
    /// where `mask` is zero receive exactly zero weight. `mask`'s last
    /// extent must equal `x`'s, and its row count must divide `x`'s
    /// (rows are tiled in contiguous groups, e.g. a [B, Lk] key mask
    /// applied to [B, Lq, Lk] scores).
    pub fn masked_softmax(&mut self, x: Var, mask: &Tensor<T>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let n = tx.last_extent();
        if mask.last_extent() != n {
            return Err(TensorError::shape(
                "masked_softmax",
                format!("mask last extent {} vs {}", mask.last_extent(), n),
            ));
        }
        let rows = tx.row_count();
        let mask_rows = mask.row_count();
        if rows % mask_rows != 0 {
            return Err(TensorError::shape(
                "masked_softmax",
                format!("{rows} rows not a multiple of {mask_rows} mask rows"),
            ));
        }
        for mr in 0..mask_rows {
            if mask.data()[mr * n..(mr + 1) * n]
                .iter()
                .all(|&v| v == T::zero())
            {
                return Err(TensorError::FullyMaskedRow(mr));
            }
        }
        let group = rows / mask_rows;
        let mut out = vec![T::zero(); tx.numel()];
        for r in 0..rows {
            let mrow = &mask.data()[(r / group) * n..(r / group + 1) * n];
            let row = &tx.data()[r * n..(r + 1) * n];
            let mut max = T::neg_infinity();
            for j in 0..n {
                if mrow[j] != T::zero() && row[j] > max {
                    max = row[j];
                }
            }
            let mut denom = T::zero();
            for j in 0..n {
                if mrow[j] != T::zero() {
                    let e = (row[j] - max).exp();
                    out[r * n + j] = e;
                    denom += e;
                }
            }
            for j in 0..n {
                out[r * n + j] = out[r * n + j] / denom;
            }
        }
        self.push(
            "masked_softmax",
            tx.shape().to_vec(),
            out,
            Op::MaskedSoftmax { x: x.0 },
        )
    }

    /// Mask-weighted mean over axis 1 of a [B, L, D] tensor with a
    /// [B, L] validity mask: rows with zero weight contribute nothing.
    pub fn mean_pool_masked(&mut self, x: Var, mask: &Tensor<T>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if tx.rank() != 3 {
            return Err(TensorError::shape("mean_pool_masked", "x must be rank 3"));
        }
        let (b, l, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if mask.shape() != [b, l] {
            return Err(TensorError::shape(
                "mean_pool_masked",
                format!("mask {:?} vs [{b}, {l}]", mask.shape()),
            ));
        }
        let mut out = vec![T::zero(); b * d];
        for bi in 0..b {
            let weights = &mask.data()[bi * l..(bi + 1) * l];
            let count = weights.iter().fold(T::zero(), |s, &w| s + w);
            if count == T::zero() {
                return Err(TensorError::FullyMaskedRow(bi));
            }
            for li in 0..l {
                let w = weights[li] / count;
                if w != T::zero() {
                    for di in 0..d {
                        out[bi * d + di] += tx.data()[(bi * l + li) * d + di] * w;
                    }
                }
            }
        }
        self.push(
            "mean_pool_masked",
            vec![b, d],
            out,
            Op::MeanPoolMasked {
                x: x.0,
                mask: mask.data().to_vec(),
            },
        )
    }

    // ---- losses and reductions ----

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(TensorError::shape(
                "mse_loss",
                format!("{:?} vs {:?}", tp.shape(), tt.shape()),
            ));
        }
        let n = c::<T>(tp.numel() as f64);
        let sum = tp
            .data()
            .iter()
            .zip(tt.data())
            .fold(T::zero(), |s, (&p, &t)| s + (p - t) * (p - t));
        self.push(
            "mse_loss",
            vec![1],
            vec![sum / n],
            Op::MseLoss {
                pred: pred.0,
                target: target.0,
            },
        )
    }

    /// Mean negative log-softmax of the true class over a [B, C] batch.
    pub fn cross_entropy_loss(
        &mut self,
        logits: Var,
        classes: &[usize],
    ) -> Result<Var, TensorError> {
        if classes.is_empty() {
            return Err(TensorError::EmptyBatch);
        }
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.shape()[0] != classes.len() {
            return Err(TensorError::shape(
                "cross_entropy_loss",
                format!("logits {:?} vs {} labels", tl.shape(), classes.len()),
            ));
        }
        let (b, n_classes) = (tl.shape()[0], tl.shape()[1]);
        for &cls in classes {
            if cls >= n_classes {
                return Err(TensorError::ClassIndex {
                    index: cls,
                    classes: n_classes,
                });
            }
        }
        let mut total = T::zero();
        for bi in 0..b {
            let row = &tl.data()[bi * n_classes..(bi + 1) * n_classes];
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row
                .iter()
                .fold(T::zero(), |s, &v| s + (v - max).exp())
                .ln()
                + max;
            total = total - (row[classes[bi]] - lse);
        }
        let loss = total / c::<T>(b as f64);
        self.push(
            "cross_entropy_loss",
            vec![1],
            vec![loss],
            Op::CrossEntropyLoss {
                logits: logits.0,
                classes: classes.to_vec(),
            },
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().fold(T::zero(), |s, &v| s + v);
        self.push("sum_all", vec![1], vec![s], Op::SumAll { a: a.0 })
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let s = ta.data().iter().fold(T::zero(), |s, &v| s + v) / c::<T>(ta.numel() as f64);
        self.push("mean_all", vec![1], vec![s], Op::MeanAll { a: a.0 })
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss: seeds the loss gradient with 1,
    /// visits each node once in reverse topological order, and accumulates
    /// into parent gradients. Consumes the tape's backward budget; a second
    /// call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if self.consumed {
            return Err(TensorError::BackwardConsumed);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        self.consumed = true;

        let mut grads: Vec<Vec<T>> = self
            .nodes
            .iter()
            .map(|n| vec![T::zero(); n.value.numel()])
            .collect();
        grads[loss.0][0] = T::one();

        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[i]);
            self.accumulate(i, &g, &mut grads);
            grads[i] = g;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, node: usize, g: &[T], grads: &mut [Vec<T>]) {
        let out = &self.nodes[node].value;
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                for (ga, &gi) in grads[*a].iter_mut().zip(g) {
                    *ga += gi;
                }
                for (gb, &gi) in grads[*b].iter_mut().zip(g) {
                    *gb += gi;
                }
            }
            Op::AddBroadcast { a, b } => {
                for (ga, &gi) in grads[*a].iter_mut().zip(g) {
                    *ga += gi;
                }
                let bn = grads[*b].len();
                for (i, &gi) in g.iter().enumerate() {
                    grads[*b][i % bn] += gi;
                }
            }
            Op::Sub { a, b } => {
                for (ga, &gi) in grads[*a].iter_mut().zip(g) {
                    *ga += gi;
                }
                for (gb, &gi) in grads[*b].iter_mut().zip(g) {
                    *gb -= gi;
                }
            }
            Op::Mul { a, b } => {
                let (da, db) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                for i in 0..g.len() {
                    grads[*a][i] += g[i] * db[i];
                    grads[*b][i] += g[i] * da[i];
                }
            }
            Op::Scale { a, factor } => {
                for (ga, &gi) in grads[*a].iter_mut().zip(g) {
                    *ga += gi * *factor;
                }
            }
            Op::MatMul { a, b } => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let sa = ta.shape();
                let (batch, m, k) = if sa.len() == 2 {
                    (1, sa[0], sa[1])
                } else {
                    (sa[0], sa[1], sa[2])
                };
                let n = tb.shape()[tb.rank() - 1];
                for bi in 0..batch {
                    let gc = &g[bi * m * n..(bi + 1) * m * n];
                    mm_nt_acc(
                        &mut grads[*a][bi * m * k..(bi + 1) * m * k],
                        gc,
                        &tb.data()[bi * k * n..(bi + 1) * k * n],
                        m,
                        n,
                        k,
                    );
                    mm_tn_acc(
                        &mut grads[*b][bi * k * n..(bi + 1) * k * n],
                        &ta.data()[bi * m * k..(bi + 1) * m * k],
                        gc,
                        m,
                        k,
                        n,
                    );
                }
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (&self.nodes[*x].value, &self.nodes[*w].value);
                let (d_in, d_out) = (tw.shape()[0], tw.shape()[1]);
                let rows = tx.row_count();
                mm_nt_acc(&mut grads[*x], g, tw.data(), rows, d_out, d_in);
                mm_tn_acc(&mut grads[*w], tx.data(), g, rows, d_in, d_out);
                for r in 0..rows {
                    for j in 0..d_out {
                        grads[*b][j] += g[r * d_out + j];
                    }
                }
            }
            Op::TransposeLast2 { a } => {
                let so = out.shape();
                let (r, c_) = (so[so.len() - 2], so[so.len() - 1]);
                let batch = out.numel() / (r * c_);
                for bi in 0..batch {
                    let gc = &g[bi * r * c_..(bi + 1) * r * c_];
                    let ga = &mut grads[*a][bi * r * c_..(bi + 1) * r * c_];
                    for i in 0..r {
                        for j in 0..c_ {
                            ga[j * r + i] += gc[i * c_ + j];
                        }
                    }
                }
            }
            Op::SliceLast { a, start, len } => {
                let last = self.nodes[*a].value.last_extent();
                let rows = self.nodes[*a].value.row_count();
                for r in 0..rows {
                    for j in 0..*len {
                        grads[*a][r * last + start + j] += g[r * len + j];
                    }
                }
            }
            Op::ConcatLast { parts } => {
                let total = out.last_extent();
                let rows = out.row_count();
                for r in 0..rows {
                    let mut offset = 0;
                    for &p in parts {
                        let last = self.nodes[p].value.last_extent();
                        for j in 0..last {
                            grads[p][r * last + j] += g[r * total + offset + j];
                        }
                        offset += last;
                    }
                }
            }
            Op::Gelu { a } => {
                let da = self.nodes[*a].value.data();
                for i in 0..g.len() {
                    grads[*a][i] += g[i] * gelu_grad(da[i]);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            } => {
                let (tx, tg) = (&self.nodes[*x].value, &self.nodes[*gamma].value);
                let d = tx.last_extent();
                let rows = tx.row_count();
                let dt = c::<T>(d as f64);
                for r in 0..rows {
                    let row = &tx.data()[r * d..(r + 1) * d];
                    let grow = &g[r * d..(r + 1) * d];
                    let mean = row.iter().fold(T::zero(), |s, &v| s + v) / dt;
                    let var = row
                        .iter()
                        .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                        / dt;
                    let inv_sd = (var + *eps).sqrt().recip();

                    let mut dxhat = vec![T::zero(); d];
                    let mut dxhat_sum = T::zero();
                    let mut dxhat_xhat_sum = T::zero();
                    for j in 0..d {
                        let xhat = (row[j] - mean) * inv_sd;
                        grads[*gamma][j] += grow[j] * xhat;
                        grads[*beta][j] += grow[j];
                        dxhat[j] = grow[j] * tg.data()[j];
                        dxhat_sum += dxhat[j];
                        dxhat_xhat_sum += dxhat[j] * xhat;
                    }
                    for j in 0..d {
                        let xhat = (row[j] - mean) * inv_sd;
                        grads[*x][r * d + j] +=
                            inv_sd / dt * (dt * dxhat[j] - dxhat_sum - xhat * dxhat_xhat_sum);
                    }
                }
            }
            Op::MaskedSoftmax { x } => {
                // Masked outputs are exactly zero, so the softmax JVP
                // already sends zero gradient to masked inputs.
                let s = out.data();
                let n = out.last_extent();
                let rows = out.row_count();
                for r in 0..rows {
                    let mut dot = T::zero();
                    for j in 0..n {
                        dot += g[r * n + j] * s[r * n + j];
                    }
                    for j in 0..n {
                        grads[*x][r * n + j] += s[r * n + j] * (g[r * n + j] - dot);
                    }
                }
            }
            Op::MeanPoolMasked { x, mask } => {
                let tx = &self.nodes[*x].value;
                let (b, l, d) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                for bi in 0..b {
                    let weights = &mask[bi * l..(bi + 1) * l];
                    let count = weights.iter().fold(T::zero(), |s, &w| s + w);
                    for li in 0..l {
                        let w = weights[li] / count;
                        if w != T::zero() {
                            for di in 0..d {
                                grads[*x][(bi * l + li) * d + di] += g[bi * d + di] * w;
                            }
                        }
                    }
                }
            }
            Op::MseLoss { pred, target } => {
                let (tp, tt) = (&self.nodes[*pred].value, &self.nodes[*target].value);
                let scale = g[0] * c::<T>(2.0) / c::<T>(tp.numel() as f64);
                for i in 0..tp.numel() {
                    let diff = (tp.data()[i] - tt.data()[i]) * scale;
                    grads[*pred][i] += diff;
                    grads[*target][i] -= diff;
                }
            }
            Op::CrossEntropyLoss { logits, classes } => {
                let tl = &self.nodes[*logits].value;
                let (b, n_classes) = (tl.shape()[0], tl.shape()[1]);
                let scale = g[0] / c::<T>(b as f64);
                for bi in 0..b {
                    let row = &tl.data()[bi * n_classes..(bi + 1) * n_classes];
                    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                    let denom = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
                    for cj in 0..n_classes {
                        let p = (row[cj] - max).exp() / denom;
                        let indicator = if cj == classes[bi] { T::one() } else { T::zero() };
                        grads[*logits][bi * n_classes + cj] += scale * (p - indicator);
                    }
                }
            }
            Op::SumAll { a } => {
                for ga in grads[*a].iter_mut() {
                    *ga += g[0];
                }
            }
            Op::MeanAll { a } => {
                let n = c::<T>(grads[*a].len() as f64);
                for ga in grads[*a].iter_mut() {
                    *ga += g[0] / n;
                }
            }
        }
    }
}

/// out[m,n] += a[m,k] · b[k,n]
fn mm_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
}

/// out[m,k] += g[m,n] · bᵀ  (b: [k,n])
fn mm_nt_acc<T: Scalar>(out: &mut [T], g: &[T], b: &[T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        for p in 0..k {
            let mut s = T::zero();
            let brow = &b[p * n..(p + 1) * n];
            let grow = &g[i * n..(i + 1) * n];
            for j in 0..n {
                s += grow[j] * brow[j];
            }
            out[i * k + p] += s;
        }
    }
}

/// out[k,n] += aᵀ · g  (a: [m,k], g: [m,n])
fn mm_tn_acc<T: Scalar>(out: &mut [T], a: &[T], g: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * grow[j];
            }
        }
    }
}

/// Tanh-approximation GELU.
fn gelu_forward<T: Scalar>(x: T) -> T {
    let half = c::<T>(0.5);
    let k = c::<T>((2.0 / std::f64::consts::PI).sqrt());
    let a = c::<T>(0.044715);
    half * x * (T::one() + (k * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = c::<T>(0.5);
    let k = c::<T>((2.0 / std::f64::consts::PI).sqrt());
    let a = c::<T>(0.044715);
    let three = c::<T>(3.0);
    let inner = k * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    let d_inner = k * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * sech2 * d_inner
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_is_identity() {
        let mut tape = Tape::new();
        let a = tape.leaf(tensor(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let eye = tape.leaf(tensor(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let out = tape.matmul(a, eye).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_product() {
        let mut tape = Tape::new();
        let a = tape.leaf(tensor(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(tensor(&[2, 1], &[5.0, 6.0]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 1]);
        assert_eq!(tape.value(out).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.leaf(tensor(&[2, 3], &[0.0; 6]));
        let b = tape.leaf(tensor(&[2, 2], &[0.0; 4]));
        assert!(matches!(
            tape.matmul(a, b),
            Err(TensorError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn batched_matmul_matches_per_batch() {
        let mut tape = Tape::new();
        let a = tape.leaf(tensor(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(tensor(&[2, 2, 1], &[1.0, 1.0, 2.0, 0.5]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 1, 1]);
        assert_eq!(tape.value(out).data(), &[3.0, 8.0]);
    }

    #[test]
    fn masked_softmax_symmetric_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[1, 2], &[0.0, 0.0]));
        let mask = tensor(&[1, 2], &[1.0, 1.0]);
        let out = tape.masked_softmax(x, &mask).unwrap();
        assert_eq!(tape.value(out).data(), &[0.5, 0.5]);
    }

    #[test]
    fn masked_softmax_forces_masked_position_to_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[1, 2], &[5.0, 100.0]));
        let mask = tensor(&[1, 2], &[1.0, 0.0]);
        let out = tape.masked_softmax(x, &mask).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 0.0]);
    }

    #[test]
    fn masked_softmax_matches_direct_formula() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[1, 3], &[1.0, 2.0, 3.0]));
        let mask = tensor(&[1, 3], &[1.0, 1.0, 1.0]);
        let out = tape.masked_softmax(x, &mask).unwrap();
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (o, v) in tape.value(out).data().iter().zip([1.0f64, 2.0, 3.0]) {
            assert!((o - v.exp() / denom).abs() < 1e-12);
        }
        let sum: f64 = tape.value(out).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn masked_softmax_rejects_fully_masked_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let mask = tensor(&[2, 2], &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            tape.masked_softmax(x, &mask).unwrap_err(),
            TensorError::FullyMaskedRow(1)
        );
    }

    #[test]
    fn masked_softmax_key_mask_broadcasts_over_query_rows() {
        let mut tape = Tape::new();
        // scores: [1 batch, 2 queries, 3 keys]; key 2 masked for the batch
        let x = tape.leaf(tensor(&[1, 2, 3], &[1.0, 2.0, 9.0, 3.0, 3.0, 9.0]));
        let mask = tensor(&[1, 3], &[1.0, 1.0, 0.0]);
        let out = tape.masked_softmax(x, &mask).unwrap();
        let d = tape.value(out).data();
        assert_eq!(d[2], 0.0);
        assert_eq!(d[5], 0.0);
        assert!((d[3] - 0.5).abs() < 1e-12 && (d[4] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[1, 4], &[3.0, 3.0, 3.0, 3.0]));
        let gamma = tape.leaf(tensor(&[4], &[1.0, 1.0, 1.0, 1.0]));
        let beta = tape.leaf(tensor(&[4], &[0.0, 0.0, 0.0, 0.0]));
        let out = tape.layer_norm(x, gamma, beta, 1e-9).unwrap();
        for v in tape.value(out).data() {
            assert!(v.abs() < 1e-4);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[2, 3], &[1.0, 2.0, 4.0, -1.0, 0.5, 9.0]));
        let gamma = tape.leaf(tensor(&[3], &[1.0, 1.0, 1.0]));
        let beta = tape.leaf(tensor(&[3], &[0.0, 0.0, 0.0]));
        let out = tape.layer_norm(x, gamma, beta, 1e-12).unwrap();
        for r in 0..2 {
            let row = &tape.value(out).data()[r * 3..(r + 1) * 3];
            let mean: f64 = row.iter().sum::<f64>() / 3.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-6, "row mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "row var {var}");
        }
    }

    #[test]
    fn gelu_fixed_points_and_asymptotes() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[3], &[0.0, 10.0, -10.0]));
        let out = tape.gelu(x).unwrap();
        let d = tape.value(out).data();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 10.0).abs() < 1e-3);
        assert!(d[2].abs() < 1e-3);
    }

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[3], &[1.0, 2.0, 3.0]));
        let y = tape.leaf(tensor(&[3], &[1.0, 2.0, 3.0]));
        let loss = tape.mse_loss(x, y).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_3() {
        let mut tape = Tape::new();
        let logits = tape.leaf(tensor(&[2, 3], &[0.7; 6]));
        let loss = tape.cross_entropy_loss(logits, &[0, 2]).unwrap();
        assert!((tape.scalar_value(loss) - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_empty_batch_and_bad_class() {
        let mut tape = Tape::new();
        let logits = tape.leaf(tensor(&[1, 3], &[0.0, 0.0, 0.0]));
        assert_eq!(
            tape.cross_entropy_loss(logits, &[]).unwrap_err(),
            TensorError::EmptyBatch
        );
        assert_eq!(
            tape.cross_entropy_loss(logits, &[3]).unwrap_err(),
            TensorError::ClassIndex {
                index: 3,
                classes: 3
            }
        );
    }

    #[test]
    fn backward_of_sum_gives_unit_gradients() {
        let mut tape = Tape::new();
        let w = tape.leaf(tensor(&[2, 3], &[0.5; 6]).requires_grad(true));
        let loss = tape.sum_all(w).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w), &[1.0; 6]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let w = tape.leaf(tensor(&[2], &[1.0, 2.0]));
        let loss = tape.sum_all(w).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(
            tape.backward(loss).unwrap_err(),
            TensorError::BackwardConsumed
        );
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let w = tape.leaf(tensor(&[2], &[1.0, 2.0]));
        assert_eq!(
            tape.backward(w).unwrap_err(),
            TensorError::NonScalarLoss(vec![2])
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::<f64>::randn(vec![4, 4], 11).unwrap());
            let w = tape.leaf(Tensor::<f64>::randn(vec![4, 4], 12).unwrap());
            let y = tape.matmul(x, w).unwrap();
            let z = tape.gelu(y).unwrap();
            tape.value(z).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_forward_is_reported() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[1], &[1e308]));
        let y = tape.leaf(tensor(&[1], &[1e308]));
        // 1e308 + 1e308 overflows to +inf
        assert_eq!(tape.add(x, y).unwrap_err(), TensorError::NonFinite("add"));
    }

    #[test]
    fn slice_concat_roundtrip() {
        let mut tape = Tape::new();
        let x = tape.leaf(tensor(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let a = tape.slice_last(x, 0, 2).unwrap();
        let b = tape.slice_last(x, 2, 2).unwrap();
        let back = tape.concat_last(&[a, b]).unwrap();
        assert_eq!(tape.value(back).data(), tape.value(x).data());
    }
}
