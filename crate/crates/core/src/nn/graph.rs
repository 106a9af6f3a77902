//! Tape-based reverse-mode differentiation over a small fixed op set.
//!
//! Every op records its inputs in creation order, so the tape is already
//! topologically sorted and `backward` is a single reverse sweep.

use std::sync::Arc;

use indexmap::IndexMap;

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Scalar, Tensor};
use super::{NnError, RMS_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Gelu(Var),
    RmsNorm { x: Var, gain: Var, inv: Vec<S> },
    Softmax { x: Var },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<S> },
    Sum(Var),
    WeightedSum(Var, Tensor<S>),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Boolean attention/softmax mask, `true` = position may be attended.
#[derive(Clone, Debug)]
pub struct Mask {
    rows: usize,
    cols: usize,
    allowed: Arc<Vec<bool>>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self, NnError> {
        if allowed.len() != rows * cols {
            return Err(NnError::DimensionMismatch(format!(
                "mask {} entries for {rows}x{cols}",
                allowed.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            allowed: Arc::new(allowed),
        })
    }

    /// Lower-triangular mask: row `i` may see columns `0..=i`.
    pub fn causal(n: usize) -> Self {
        let allowed = (0..n * n).map(|idx| idx % n <= idx / n).collect();
        Self {
            rows: n,
            cols: n,
            allowed: Arc::new(allowed),
        }
    }

    pub fn allowed(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    params: IndexMap<String, Var>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: IndexMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor<S>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    /// Register a named parameter once; later lookups return the same node.
    pub fn param(&mut self, name: &str, t: &Tensor<S>, trainable: bool) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(t.clone(), Op::Leaf, trainable);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a @ b^T`; used for `x @ W^T` with `W` stored as `d_out × d_in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMulNt(a, b), ng))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NnError::DimensionMismatch(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let n = self.value(a).cols();
        if self.value(row).len() != n {
            return Err(NnError::DimensionMismatch(format!(
                "add_row: {} cols vs row of {}",
                n,
                self.value(row).len()
            )));
        }
        let r = self.value(row).data().to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + r[i % n])
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * c).collect())
            .expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| gelu(x)).collect())
            .expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    /// Row-wise RMS normalization with a learned `1 × n` gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Result<Var, NnError> {
        let (rows, n) = (self.value(x).rows(), self.value(x).cols());
        if self.value(gain).len() != n {
            return Err(NnError::DimensionMismatch(format!(
                "rms_norm: {n} cols vs gain {}",
                self.value(gain).len()
            )));
        }
        let g = self.value(gain).data().to_vec();
        let xv = self.value(x).data();
        let nf = S::from_f64(n as f64);
        let eps = S::from_f64(RMS_EPS);
        let mut inv = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * n);
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let ms = row.iter().map(|&v| v * v).sum::<S>() / nf;
            let iv = S::one() / (ms + eps).sqrt();
            inv.push(iv);
            data.extend(row.iter().zip(&g).map(|(&v, &gg)| v * iv * gg));
        }
        let out = Tensor::new(self.value(x).shape().to_vec(), data)?;
        let ng = self.ng(x) || self.ng(gain);
        Ok(self.push(out, Op::RmsNorm { x, gain, inv }, ng))
    }

    /// Row-wise softmax. Masked entries are excluded from the normalization and
    /// come out exactly zero, which is equivalent to a `-inf` logit.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&Mask>) -> Result<Var, NnError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if let Some(m) = mask {
            if m.rows != rows || m.cols != cols {
                return Err(NnError::DimensionMismatch(format!(
                    "mask {}x{} for scores {rows}x{cols}",
                    m.rows, m.cols
                )));
            }
        }
        let mut data = vec![S::zero(); rows * cols];
        for r in 0..rows {
            let row = t.row(r);
            let ok = |c: usize| mask.is_none_or(|m| m.allowed(r, c));
            let mut max = S::neg_infinity();
            for (c, &v) in row.iter().enumerate() {
                if ok(c) && v > max {
                    max = v;
                }
            }
            if max == S::neg_infinity() {
                continue;
            }
            let mut sum = S::zero();
            for (c, &v) in row.iter().enumerate() {
                if ok(c) {
                    let e = (v - max).exp();
                    data[r * cols + c] = e;
                    sum = sum + e;
                }
            }
            for c in 0..cols {
                data[r * cols + c] = data[r * cols + c] / sum;
            }
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Softmax { x }, ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if start + len > cols {
            return Err(NnError::DimensionMismatch(format!(
                "slice_cols {start}+{len} of {cols}"
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceCols { x, start }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if start + len > rows {
            return Err(NnError::DimensionMismatch(format!(
                "slice_rows {start}+{len} of {rows}"
            )));
        }
        let data = t.data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::new(vec![len, cols], data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceRows { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| NnError::DimensionMismatch("concat_cols of nothing".into()))?;
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(NnError::DimensionMismatch("concat_cols row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| NnError::DimensionMismatch("concat_rows of nothing".into()))?;
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(NnError::DimensionMismatch("concat_rows col counts differ".into()));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let t = self.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NnError::IndexOutOfRange { index: id, len: rows });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        let ng = self.ng(table);
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Mean negative log-likelihood over rows whose target is `Some`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, NnError> {
        let t = self.value(logits);
        let (rows, v) = (t.rows(), t.cols());
        if targets.len() != rows {
            return Err(NnError::DimensionMismatch(format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        let count = targets.iter().filter(|x| x.is_some()).count();
        if count == 0 {
            return Err(NnError::EmptyTargetSet);
        }
        let mut probs = vec![S::zero(); rows * v];
        let mut total = S::zero();
        for (r, tgt) in targets.iter().enumerate() {
            let Some(tgt) = *tgt else { continue };
            if tgt >= v {
                return Err(NnError::IndexOutOfRange { index: tgt, len: v });
            }
            let row = t.row(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let sum: S = row.iter().map(|&z| (z - max).exp()).sum();
            let lse = max + sum.ln();
            total = total + (lse - row[tgt]);
            for (c, &z) in row.iter().enumerate() {
                probs[r * v + c] = (z - lse).exp();
            }
        }
        let loss = total / S::from_f64(count as f64);
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: S = self.value(x).data().iter().copied().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// `sum(x ⊙ w)` for a constant weight tensor; scalarizes outputs for checks.
    pub fn weighted_sum(&mut self, x: Var, w: Tensor<S>) -> Result<Var, NnError> {
        if w.shape() != self.value(x).shape() {
            return Err(NnError::DimensionMismatch(format!(
                "weighted_sum: {:?} vs {:?}",
                self.value(x).shape(),
                w.shape()
            )));
        }
        let s: S = self
            .value(x)
            .data()
            .iter()
            .zip(w.data())
            .map(|(&a, &b)| a * b)
            .sum();
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, w), ng))
    }

    /// Reverse sweep from a scalar output. Returns gradients indexed by node.
    pub fn backward(&self, output: Var) -> Gradients<S> {
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let out_shape = self.value(output).shape().to_vec();
        grads[output.0] = Some(Tensor::full(&out_shape, S::one()));
        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(gy);
                continue;
            }
            self.backprop_node(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Gradients { grads }
    }

    fn backprop_node(
        &self,
        idx: usize,
        gy: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
    ) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [S])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let g = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()));
            f(g.data_mut());
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = dY @ B^T ; dB = A^T @ dY
                acc(*a, &mut |g| matmul_nt_into(gy.data(), bv.data(), g, m, n, k));
                acc(*b, &mut |g| matmul_tn_into(av.data(), gy.data(), g, m, k, n));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                // Y = A B^T: dA = dY @ B ; dB = dY^T @ A
                acc(*a, &mut |g| matmul_into(gy.data(), bv.data(), g, m, n, k));
                acc(*b, &mut |g| matmul_tn_into(gy.data(), av.data(), g, m, n, k));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |g| {
                        for (o, &d) in g.iter_mut().zip(gy.data()) {
                            *o = *o + d;
                        }
                    });
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |g| {
                    for (o, &d) in g.iter_mut().zip(gy.data()) {
                        *o = *o + d;
                    }
                });
                let n = self.value(*a).cols();
                acc(*row, &mut |g| {
                    for (i, &d) in gy.data().iter().enumerate() {
                        g[i % n] = g[i % n] + d;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |g| {
                    for ((o, &d), &y) in g.iter_mut().zip(gy.data()).zip(bv) {
                        *o = *o + d * y;
                    }
                });
                acc(*b, &mut |g| {
                    for ((o, &d), &x) in g.iter_mut().zip(gy.data()).zip(av) {
                        *o = *o + d * x;
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |g| {
                    for (o, &d) in g.iter_mut().zip(gy.data()) {
                        *o = *o + d * *c;
                    }
                });
            }
            Op::Gelu(a) => {
                let xv = self.value(*a).data();
                acc(*a, &mut |g| {
                    for ((o, &d), &x) in g.iter_mut().zip(gy.data()).zip(xv) {
                        *o = *o + d * gelu_grad(x);
                    }
                });
            }
            Op::RmsNorm { x, gain, inv } => {
                let xv = self.value(*x);
                let gv = self.value(*gain).data();
                let (rows, n) = (xv.rows(), xv.cols());
                let nf = S::from_f64(n as f64);
                acc(*x, &mut |g| {
                    for r in 0..rows {
                        let xr = xv.row(r);
                        let dy = &gy.data()[r * n..(r + 1) * n];
                        let iv = inv[r];
                        let dot: S = (0..n).map(|i| dy[i] * gv[i] * xr[i]).sum();
                        let coef = iv * iv * iv * dot / nf;
                        for i in 0..n {
                            g[r * n + i] = g[r * n + i] + iv * gv[i] * dy[i] - coef * xr[i];
                        }
                    }
                });
                acc(*gain, &mut |g| {
                    for r in 0..rows {
                        let xr = xv.row(r);
                        for i in 0..n {
                            g[i] = g[i] + gy.data()[r * n + i] * xr[i] * inv[r];
                        }
                    }
                });
            }
            Op::Softmax { x } => {
                let y = &node.value;
                let (rows, cols) = (y.rows(), y.cols());
                acc(*x, &mut |g| {
                    for r in 0..rows {
                        let yr = y.row(r);
                        let dy = &gy.data()[r * cols..(r + 1) * cols];
                        let dot: S = yr.iter().zip(dy).map(|(&a, &b)| a * b).sum();
                        for c in 0..cols {
                            g[r * cols + c] = g[r * cols + c] + yr[c] * (dy[c] - dot);
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let cols = self.value(*x).cols();
                let len = node.value.cols();
                acc(*x, &mut |g| {
                    for r in 0..node.value.rows() {
                        for c in 0..len {
                            let o = &mut g[r * cols + start + c];
                            *o = *o + gy.data()[r * len + c];
                        }
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let cols = self.value(*x).cols();
                acc(*x, &mut |g| {
                    let off = start * cols;
                    for (i, &d) in gy.data().iter().enumerate() {
                        g[off + i] = g[off + i] + d;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    acc(p, &mut |g| {
                        for r in 0..node.value.rows() {
                            for c in 0..pc {
                                g[r * pc + c] = g[r * pc + c] + gy.data()[r * total + off + c];
                            }
                        }
                    });
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, &mut |g| {
                        for i in 0..len {
                            g[i] = g[i] + gy.data()[off + i];
                        }
                    });
                    off += len;
                }
            }
            Op::GatherRows { table, ids } => {
                let cols = node.value.cols();
                acc(*table, &mut |g| {
                    for (i, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            g[id * cols + c] = g[id * cols + c] + gy.data()[i * cols + c];
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let v = self.value(*logits).cols();
                let count = targets.iter().filter(|t| t.is_some()).count();
                let scale = gy.data()[0] / S::from_f64(count as f64);
                acc(*logits, &mut |g| {
                    for (r, tgt) in targets.iter().enumerate() {
                        let Some(tgt) = *tgt else { continue };
                        for c in 0..v {
                            let mut d = probs[r * v + c];
                            if c == tgt {
                                d = d - S::one();
                            }
                            g[r * v + c] = g[r * v + c] + d * scale;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let d = gy.data()[0];
                acc(*x, &mut |g| {
                    for o in g.iter_mut() {
                        *o = *o + d;
                    }
                });
            }
            Op::WeightedSum(x, w) => {
                let d = gy.data()[0];
                acc(*x, &mut |g| {
                    for (o, &wv) in g.iter_mut().zip(w.data()) {
                        *o = *o + d * wv;
                    }
                });
            }
        }
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every named parameter registered in `graph` that received one.
    pub fn named(&self, graph: &Graph<S>) -> IndexMap<String, Tensor<S>> {
        graph
            .params
            .iter()
            .filter(|(_, v)| graph.nodes[v.0].needs_grad)
            .map(|(name, &v)| {
                let g = self
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let a = S::from_f64(GELU_A);
    let half = S::from_f64(0.5);
    half * x * (S::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let a = S::from_f64(GELU_A);
    let half = S::from_f64(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (S::one() + t)
        + half * x * (S::one() - t * t) * c * (S::one() + S::from_f64(3.0) * a * x * x)
}
