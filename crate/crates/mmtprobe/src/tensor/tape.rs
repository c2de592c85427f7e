//! Gradient tape: records matrix operations, replays them in reverse.
//!
//! All tape operands are matrices (scalars are 1×1, vectors 1×n or n×1).
//! Binary elementwise ops accept exact shapes or a 1×n row broadcast
//! against m×n; nothing else, so every backward rule stays auditable.

use super::Tensor;
use crate::error::{Error, Result};
use rand::Rng;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// How the operand shapes of a binary elementwise op relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pairing {
    Exact,
    /// Left operand is 1×n, broadcast over the rows of the right.
    RowLeft,
    /// Right operand is 1×n, broadcast over the rows of the left.
    RowRight,
}

#[derive(Debug, Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf {
        trainable: bool,
    },
    Matmul {
        a: Var,
        b: Var,
    },
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        pairing: Pairing,
    },
    Scale {
        a: Var,
        factor: f64,
    },
    Tanh {
        a: Var,
    },
    Sigmoid {
        a: Var,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Transpose {
        a: Var,
    },
    Narrow {
        a: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    EmbeddingLookup {
        table: Var,
        ids: Vec<usize>,
    },
    MaskedCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<f64>,
        softmax: Tensor,
        count: f64,
    },
    Dropout {
        a: Var,
        // survivor mask with the 1/(1-p) scale folded in
        mask: Vec<f64>,
    },
    L2Normalize {
        a: Var,
        axis: usize,
        // per-slice norms; 0.0 marks a guarded zero vector
        norms: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode gradient tape over [`Tensor`] matrices.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node recorded at or after `len`; lets a decoder reuse
    /// the parameter leaves across sentences.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.truncate(len);
    }

    /// Clear gradient buffers, keeping recorded nodes.
    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Record an input tensor. Trainable leaves are the ones whose
    /// gradients the optimizer consumes.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.push(value, Op::Leaf { trainable })
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_matrix(), "tape tensors are matrices");
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn require_matrix(&self, v: Var, op: &'static str) -> Result<()> {
        if !self.value(v).is_matrix() {
            return Err(Error::Dimension {
                op,
                left: self.value(v).shape().to_vec(),
                right: vec![],
            });
        }
        Ok(())
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// Matrix product a[m×k] · b[k×n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_matrix(a, "matmul")?;
        self.require_matrix(b, "matmul")?;
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = (bv.rows(), bv.cols());
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_nn(av.data(), bv.data(), m, k, n, &mut out);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let pairing = pairing_of(av.shape(), bv.shape()).ok_or_else(|| Error::Dimension {
            op: match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            },
            left: av.shape().to_vec(),
            right: bv.shape().to_vec(),
        })?;
        let (rows, cols) = match pairing {
            Pairing::Exact | Pairing::RowRight => (av.rows(), av.cols()),
            Pairing::RowLeft => (bv.rows(), bv.cols()),
        };
        let mut out = vec![0.0; rows * cols];
        let (ad, bd) = (av.data(), bv.data());
        for r in 0..rows {
            let o = &mut out[r * cols..(r + 1) * cols];
            let ar = match pairing {
                Pairing::RowLeft => &ad[..cols],
                _ => &ad[r * cols..(r + 1) * cols],
            };
            let br = match pairing {
                Pairing::RowRight => &bd[..cols],
                _ => &bd[r * cols..(r + 1) * cols],
            };
            match kind {
                BinaryKind::Add => {
                    for ((o, &x), &y) in o.iter_mut().zip(ar).zip(br) {
                        *o = x + y;
                    }
                }
                BinaryKind::Sub => {
                    for ((o, &x), &y) in o.iter_mut().zip(ar).zip(br) {
                        *o = x - y;
                    }
                }
                BinaryKind::Mul => {
                    for ((o, &x), &y) in o.iter_mut().zip(ar).zip(br) {
                        *o = x * y;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::Binary { kind, a, b, pairing },
        ))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).data().iter().map(|v| v * factor).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Scale { a, factor }))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self.value(a).data().iter().map(|v| v.tanh()).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Tanh { a }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Sigmoid { a }))
    }

    /// Softmax along `axis` (0 = down columns, 1 = across rows), computed
    /// with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.require_matrix(a, "softmax")?;
        if axis > 1 {
            return Err(Error::Index {
                what: "axis",
                index: axis,
                size: 2,
            });
        }
        let v = self.value(a);
        let out = softmax_values(v, axis);
        Ok(self.push(out, Op::Softmax { a, axis }))
    }

    /// Concatenate matrices along `axis`; shapes must agree on the other
    /// axis.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat of an empty tensor list"));
        }
        if axis > 1 {
            return Err(Error::Index {
                what: "axis",
                index: axis,
                size: 2,
            });
        }
        let first = self.value(parts[0]).shape().to_vec();
        let fixed = 1 - axis;
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[fixed] != first[fixed] {
                return Err(Error::Dimension {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (rows, cols) = if axis == 0 {
            (total, first[1])
        } else {
            (first[0], total)
        };
        let mut out = vec![0.0; rows * cols];
        if axis == 0 {
            let mut at = 0;
            for &p in parts {
                let v = self.value(p);
                out[at..at + v.numel()].copy_from_slice(v.data());
                at += v.numel();
            }
        } else {
            let mut col_at = 0;
            for &p in parts {
                let v = self.value(p);
                let w = v.cols();
                for r in 0..rows {
                    out[r * cols + col_at..r * cols + col_at + w]
                        .copy_from_slice(v.row_slice(r));
                }
                col_at += w;
            }
        }
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.require_matrix(a, "transpose")?;
        let v = self.value(a);
        let (m, n) = (v.rows(), v.cols());
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = v.data()[r * n + c];
            }
        }
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose { a }))
    }

    /// Contiguous range along `axis`: rows `start..start+len` (axis 0) or
    /// columns (axis 1).
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.require_matrix(a, "narrow")?;
        let v = self.value(a);
        let bound = v.shape()[axis];
        if start + len > bound || len == 0 {
            return Err(Error::Index {
                what: "narrow range end",
                index: start + len,
                size: bound,
            });
        }
        let (m, n) = (v.rows(), v.cols());
        let out = if axis == 0 {
            let mut out = vec![0.0; len * n];
            out.copy_from_slice(&v.data()[start * n..(start + len) * n]);
            Tensor::new(vec![len, n], out)?
        } else {
            let mut out = vec![0.0; m * len];
            for r in 0..m {
                out[r * len..(r + 1) * len]
                    .copy_from_slice(&v.data()[r * n + start..r * n + start + len]);
            }
            Tensor::new(vec![m, len], out)?
        };
        Ok(self.push(out, Op::Narrow { a, axis, start, len }))
    }

    /// Gather rows of `table` by id; repeated ids accumulate gradient.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.require_matrix(table, "embedding_lookup")?;
        if ids.is_empty() {
            return Err(Error::contract("embedding_lookup with no ids"));
        }
        let t = self.value(table);
        let (v_size, d) = (t.rows(), t.cols());
        for &id in ids {
            if id >= v_size {
                return Err(Error::Index {
                    what: "token id",
                    index: id,
                    size: v_size,
                });
            }
        }
        let mut out = vec![0.0; ids.len() * d];
        for (r, &id) in ids.iter().enumerate() {
            out[r * d..(r + 1) * d].copy_from_slice(t.row_slice(id));
        }
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], out)?,
            Op::EmbeddingLookup {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Mean over unmasked positions of −log softmax(logits)[target].
    /// `mask` holds 1.0 for real positions and 0.0 for padding.
    pub fn masked_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[f64],
    ) -> Result<Var> {
        self.require_matrix(logits, "masked_cross_entropy")?;
        let v = self.value(logits);
        let (n, vocab) = (v.rows(), v.cols());
        if targets.len() != n || mask.len() != n {
            return Err(Error::Dimension {
                op: "masked_cross_entropy",
                left: vec![n, vocab],
                right: vec![targets.len(), mask.len()],
            });
        }
        for &t in targets {
            if t >= vocab {
                return Err(Error::Index {
                    what: "target id",
                    index: t,
                    size: vocab,
                });
            }
        }
        let count: f64 = mask.iter().sum();
        if count == 0.0 {
            return Err(Error::DegenerateBatch);
        }
        let softmax = softmax_values(v, 1);
        let mut loss = 0.0;
        for r in 0..n {
            if mask[r] == 0.0 {
                continue;
            }
            let row = v.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[targets[r]];
        }
        loss /= count;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedCrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                softmax,
                count,
            },
        ))
    }

    /// Inverted dropout: zero with probability `p` and scale survivors by
    /// 1/(1−p) during training; the exact identity otherwise.
    pub fn dropout<R: Rng>(
        &mut self,
        a: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let v = self.value(a);
        let mask: Vec<f64> = (0..v.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let out: Vec<f64> = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Dropout { a, mask }))
    }

    /// L2-normalize slices along `axis`; zero vectors stay zero.
    pub fn l2_normalize(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.require_matrix(a, "l2_normalize")?;
        if axis > 1 {
            return Err(Error::Index {
                what: "axis",
                index: axis,
                size: 2,
            });
        }
        let v = self.value(a);
        let (m, n) = (v.rows(), v.cols());
        let slices = if axis == 1 { m } else { n };
        let mut norms = vec![0.0; slices];
        let mut out = v.data().to_vec();
        if axis == 1 {
            for r in 0..m {
                let row = &mut out[r * n..(r + 1) * n];
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > super::ZERO_NORM_EPS {
                    norms[r] = norm;
                    for x in row {
                        *x /= norm;
                    }
                }
            }
        } else {
            for c in 0..n {
                let mut sq = 0.0;
                for r in 0..m {
                    sq += out[r * n + c] * out[r * n + c];
                }
                let norm = sq.sqrt();
                if norm > super::ZERO_NORM_EPS {
                    norms[c] = norm;
                    for r in 0..m {
                        out[r * n + c] /= norm;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::L2Normalize { a, axis, norms },
        ))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Accumulate gradients for everything `loss` depends on. `loss`
    /// must be a scalar node. Running twice on the same tape (after
    /// `zero_grads`) yields bit-identical gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue, // not reachable from the loss
            };
            match &nodes[i].op {
                Op::Leaf { .. } => {}
                Op::Matmul { a, b } => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k) = (av.rows(), av.cols());
                    let n = bv.cols();
                    {
                        let ga = grad_buf(grads, *a, av.shape());
                        matmul_nt(g.data(), bv.data(), m, n, k, ga);
                    }
                    {
                        let gb = grad_buf(grads, *b, bv.shape());
                        matmul_tn(av.data(), g.data(), m, k, n, gb);
                    }
                }
                Op::Binary { kind, a, b, pairing } => {
                    let (kind, a, b, pairing) = (*kind, *a, *b, *pairing);
                    let (rows, cols) = (g.rows(), g.cols());
                    // left operand
                    {
                        let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                        match pairing {
                            Pairing::RowLeft => match kind {
                                BinaryKind::Mul => {
                                    let bd = nodes[b.0].value.data();
                                    for r in 0..rows {
                                        for c in 0..cols {
                                            ga[c] += g.data()[r * cols + c] * bd[r * cols + c];
                                        }
                                    }
                                }
                                _ => {
                                    for r in 0..rows {
                                        for c in 0..cols {
                                            ga[c] += g.data()[r * cols + c];
                                        }
                                    }
                                }
                            },
                            _ => match kind {
                                BinaryKind::Mul => {
                                    let bd = nodes[b.0].value.data();
                                    for (r, gv) in g.data().iter().enumerate() {
                                        let bval = match pairing {
                                            Pairing::RowRight => bd[r % cols],
                                            _ => bd[r],
                                        };
                                        ga[r] += gv * bval;
                                    }
                                }
                                _ => {
                                    for (x, gv) in ga.iter_mut().zip(g.data()) {
                                        *x += gv;
                                    }
                                }
                            },
                        }
                    }
                    // right operand
                    {
                        let gb = grad_buf(grads, b, nodes[b.0].value.shape());
                        let sign = match kind {
                            BinaryKind::Sub => -1.0,
                            _ => 1.0,
                        };
                        match pairing {
                            Pairing::RowRight => match kind {
                                BinaryKind::Mul => {
                                    let ad = nodes[a.0].value.data();
                                    for r in 0..rows {
                                        for c in 0..cols {
                                            gb[c] += g.data()[r * cols + c] * ad[r * cols + c];
                                        }
                                    }
                                }
                                _ => {
                                    for r in 0..rows {
                                        for c in 0..cols {
                                            gb[c] += sign * g.data()[r * cols + c];
                                        }
                                    }
                                }
                            },
                            _ => match kind {
                                BinaryKind::Mul => {
                                    let ad = nodes[a.0].value.data();
                                    for (r, gv) in g.data().iter().enumerate() {
                                        let aval = match pairing {
                                            Pairing::RowLeft => ad[r % cols],
                                            _ => ad[r],
                                        };
                                        gb[r] += gv * aval;
                                    }
                                }
                                _ => {
                                    for (x, gv) in gb.iter_mut().zip(g.data()) {
                                        *x += sign * gv;
                                    }
                                }
                            },
                        }
                    }
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    for (x, gv) in ga.iter_mut().zip(g.data()) {
                        *x += gv * factor;
                    }
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let out = nodes[i].value.data();
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    for ((x, gv), y) in ga.iter_mut().zip(g.data()).zip(out) {
                        *x += gv * (1.0 - y * y);
                    }
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let out = nodes[i].value.data();
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    for ((x, gv), y) in ga.iter_mut().zip(g.data()).zip(out) {
                        *x += gv * y * (1.0 - y);
                    }
                }
                Op::Softmax { a, axis } => {
                    let (a, axis) = (*a, *axis);
                    let y = &nodes[i].value;
                    let (m, n) = (y.rows(), y.cols());
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    // dx = y ∘ (g − ⟨g, y⟩ per slice)
                    if axis == 1 {
                        for r in 0..m {
                            let yr = y.row_slice(r);
                            let gr = &g.data()[r * n..(r + 1) * n];
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            let out = &mut ga[r * n..(r + 1) * n];
                            for ((x, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                                *x += yv * (gv - dot);
                            }
                        }
                    } else {
                        for c in 0..n {
                            let mut dot = 0.0;
                            for r in 0..m {
                                dot += y.data()[r * n + c] * g.data()[r * n + c];
                            }
                            for r in 0..m {
                                let yv = y.data()[r * n + c];
                                ga[r * n + c] += yv * (g.data()[r * n + c] - dot);
                            }
                        }
                    }
                }
                Op::Concat { parts, axis } => {
                    let parts = parts.clone();
                    let axis = *axis;
                    let cols = nodes[i].value.cols();
                    if axis == 0 {
                        let mut at = 0;
                        for p in parts {
                            let numel = nodes[p.0].value.numel();
                            let gp = grad_buf(grads, p, nodes[p.0].value.shape());
                            for (x, gv) in gp.iter_mut().zip(&g.data()[at..at + numel]) {
                                *x += gv;
                            }
                            at += numel;
                        }
                    } else {
                        let rows = nodes[i].value.rows();
                        let mut col_at = 0;
                        for p in parts {
                            let w = nodes[p.0].value.cols();
                            let gp = grad_buf(grads, p, nodes[p.0].value.shape());
                            for r in 0..rows {
                                for c in 0..w {
                                    gp[r * w + c] += g.data()[r * cols + col_at + c];
                                }
                            }
                            col_at += w;
                        }
                    }
                }
                Op::Transpose { a } => {
                    let a = *a;
                    let (m, n) = (g.rows(), g.cols()); // g has transposed shape
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    for r in 0..m {
                        for c in 0..n {
                            ga[c * m + r] += g.data()[r * n + c];
                        }
                    }
                }
                Op::Narrow { a, axis, start, len } => {
                    let (a, axis, start, len) = (*a, *axis, *start, *len);
                    let (pm, pn) = {
                        let p = &nodes[a.0].value;
                        (p.rows(), p.cols())
                    };
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    if axis == 0 {
                        for (x, gv) in ga[start * pn..(start + len) * pn]
                            .iter_mut()
                            .zip(g.data())
                        {
                            *x += gv;
                        }
                    } else {
                        for r in 0..pm {
                            for c in 0..len {
                                ga[r * pn + start + c] += g.data()[r * len + c];
                            }
                        }
                    }
                }
                Op::EmbeddingLookup { table, ids } => {
                    let table = *table;
                    let ids = ids.clone();
                    let d = nodes[table.0].value.cols();
                    let gt = grad_buf(grads, table, nodes[table.0].value.shape());
                    for (r, id) in ids.iter().enumerate() {
                        let src = &g.data()[r * d..(r + 1) * d];
                        let dst = &mut gt[id * d..(id + 1) * d];
                        for (x, gv) in dst.iter_mut().zip(src) {
                            *x += gv;
                        }
                    }
                }
                Op::MaskedCrossEntropy {
                    logits,
                    targets,
                    mask,
                    softmax,
                    count,
                } => {
                    let logits = *logits;
                    let count = *count;
                    let (n, vocab) = (softmax.rows(), softmax.cols());
                    let gscale = g.scalar_value() / count;
                    let softmax = softmax.clone();
                    let (targets, mask) = (targets.clone(), mask.clone());
                    let gl = grad_buf(grads, logits, nodes[logits.0].value.shape());
                    for r in 0..n {
                        if mask[r] == 0.0 {
                            continue;
                        }
                        let sr = softmax.row_slice(r);
                        let out = &mut gl[r * vocab..(r + 1) * vocab];
                        for (x, &s) in out.iter_mut().zip(sr) {
                            *x += gscale * s;
                        }
                        out[targets[r]] -= gscale;
                    }
                }
                Op::Dropout { a, mask } => {
                    let a = *a;
                    let mask = mask.clone();
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    for ((x, gv), m) in ga.iter_mut().zip(g.data()).zip(&mask) {
                        *x += gv * m;
                    }
                }
                Op::L2Normalize { a, axis, norms } => {
                    let a = *a;
                    let axis = *axis;
                    let norms = norms.clone();
                    let y = &nodes[i].value;
                    let (m, n) = (y.rows(), y.cols());
                    let ga = grad_buf(grads, a, nodes[a.0].value.shape());
                    // dx = (g − y⟨g,y⟩)/‖x‖ per slice; zero slices pass nothing
                    if axis == 1 {
                        for r in 0..m {
                            if norms[r] == 0.0 {
                                continue;
                            }
                            let yr = y.row_slice(r);
                            let gr = &g.data()[r * n..(r + 1) * n];
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            let out = &mut ga[r * n..(r + 1) * n];
                            for ((x, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                                *x += (gv - yv * dot) / norms[r];
                            }
                        }
                    } else {
                        for c in 0..n {
                            if norms[c] == 0.0 {
                                continue;
                            }
                            let mut dot = 0.0;
                            for r in 0..m {
                                dot += y.data()[r * n + c] * g.data()[r * n + c];
                            }
                            for r in 0..m {
                                let yv = y.data()[r * n + c];
                                ga[r * n + c] += (g.data()[r * n + c] - yv * dot) / norms[c];
                            }
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Trainable-leaf gradients as (var, gradient) pairs in tape order.
    pub fn trainable_grads(&self) -> Vec<(Var, &Tensor)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { trainable: true } => {
                    self.grads[i].as_ref().map(|g| (Var(i), g))
                }
                _ => None,
            })
            .collect()
    }
}

fn pairing_of(a: &[usize], b: &[usize]) -> Option<Pairing> {
    if a.len() != 2 || b.len() != 2 {
        return None;
    }
    if a == b {
        Some(Pairing::Exact)
    } else if a[0] == 1 && a[1] == b[1] {
        Some(Pairing::RowLeft)
    } else if b[0] == 1 && b[1] == a[1] {
        Some(Pairing::RowRight)
    } else {
        None
    }
}

fn grad_buf<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

fn softmax_values(v: &Tensor, axis: usize) -> Tensor {
    let (m, n) = (v.rows(), v.cols());
    let mut out = vec![0.0; m * n];
    if axis == 1 {
        for r in 0..m {
            let row = v.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[r * n..(r + 1) * n];
            let mut sum = 0.0;
            for (x, &xv) in o.iter_mut().zip(row) {
                *x = (xv - max).exp();
                sum += *x;
            }
            for x in o {
                *x /= sum;
            }
        }
    } else {
        for c in 0..n {
            let mut max = f64::NEG_INFINITY;
            for r in 0..m {
                max = max.max(v.data()[r * n + c]);
            }
            let mut sum = 0.0;
            for r in 0..m {
                let e = (v.data()[r * n + c] - max).exp();
                out[r * n + c] = e;
                sum += e;
            }
            for r in 0..m {
                out[r * n + c] /= sum;
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("softmax preserves shape")
}

// ── matmul kernels ──────────────────────────────────────────────────
// All three accumulate into `out` so backward can reuse them directly.

/// out[m×n] += a[m×k] · b[k×n]
fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// out[m×k] += a[m×n] · b[k×n]ᵀ
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            *o += s;
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · b[m×n]
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut out[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}
