use super::kernels::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc};
use super::{Result, Tensor, TensorError};
use crate::scalar::Scalar;
use std::sync::Arc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, T),
    MulScalar(Var, Var),
    Unary(Var, Unary, T),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    RowScale(Var, Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    SumAll(Var),
    SumRows(Var),
    MeanRows(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of executed operations. Ops are appended in execution order, so
/// the record is topologically sorted by construction.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`] for every leaf that required a gradient.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<Var>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Parameters registered with [`Tape::param`], in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn check_index(op: &'static str, idx: &[usize], bound: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= bound) {
        Some(&index) => Err(TensorError::Index { op, index, bound }),
        None => Ok(()),
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. It takes part in differentiation iff `t.requires_grad`.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        t.grad = None;
        let needs_grad = t.requires_grad;
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    /// Copies a parameter onto the tape and remembers it for [`Gradients::params`].
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        let v = self.leaf(Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("valid tensor").with_grad());
        self.params.push(v);
        v
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(dim_err(op, s, &[0, 0]));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(dim_err("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.data(a), self.data(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<(Vec<usize>, Vec<T>)> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, self.shape(a), self.shape(b)));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok((self.shape(a).to_vec(), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(s, d, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(s, d, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, d) = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(s, d, Op::Mul(a, b), &[a, b]))
    }

    /// `x[n×d] + bias[d]`, adding the bias to every row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(bias).len() != cols {
            return Err(dim_err("add_row_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.data(bias);
        let mut out = self.data(x).to_vec();
        if cols > 0 {
            for row in out.chunks_exact_mut(cols) {
                add_into(row, b);
            }
        }
        let s = self.shape(x).to_vec();
        Ok(self.push(s, out, Op::AddRowBias(x, bias), &[x, bias]))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v * c).collect();
        let s = self.shape(x).to_vec();
        Ok(self.push(s, out, Op::Scale(x, c), &[x]))
    }

    /// Multiplies by a differentiable one-element tensor.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(TensorError::NotScalar {
                op: "mul_scalar",
                shape: self.shape(s).to_vec(),
            });
        }
        let c = self.data(s)[0];
        let out = self.data(x).iter().map(|&v| v * c).collect();
        let sh = self.shape(x).to_vec();
        Ok(self.push(sh, out, Op::MulScalar(x, s), &[x, s]))
    }

    fn unary(&mut self, x: Var, kind: Unary, slope: T) -> Var {
        let one = T::one();
        let out = self
            .data(x)
            .iter()
            .map(|&v| match kind {
                Unary::Relu => v.max(T::zero()),
                Unary::LeakyRelu => {
                    if v > T::zero() {
                        v
                    } else {
                        v * slope
                    }
                }
                Unary::Tanh => fast_tanh(v),
                Unary::Sigmoid => one / (one + (-v).exp()),
            })
            .collect();
        let s = self.shape(x).to_vec();
        self.push(s, out, Op::Unary(x, kind, slope), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu, T::zero())
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(x, Unary::LeakyRelu, slope)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid, T::zero())
    }

    /// Stacks matrices (or vectors, as single rows) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| dim_err("concat_rows", &[], &[]))?;
        let cols = self.value(first).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(dim_err("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| dim_err("concat_cols", &[], &[]))?;
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(dim_err("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(self.value(p).cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if start + len > rows {
            return Err(TensorError::Index {
                op: "slice_rows",
                index: start + len,
                bound: rows,
            });
        }
        let out = t.data()[start * cols..(start + len) * cols].to_vec();
        Ok(self.push(vec![len, cols], out, Op::SliceRows(x, start), &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if start + len > cols {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: start + len,
                bound: cols,
            });
        }
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        Ok(self.push(vec![rows, len], out, Op::SliceCols(x, start), &[x]))
    }

    /// `out[j] = x[index[j]]`.
    pub fn gather_rows(&mut self, x: Var, index: &Arc<[usize]>) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        check_index("gather_rows", index, rows)?;
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            out.extend_from_slice(t.row(i));
        }
        Ok(self.push(vec![index.len(), cols], out, Op::GatherRows(x, index.clone()), &[x]))
    }

    /// `out[i] = Σ_{j : dst[j] = i} src[j]`; rows without contributions are zero.
    pub fn scatter_add_rows(&mut self, src: Var, dst: &Arc<[usize]>, out_rows: usize) -> Result<Var> {
        let t = self.value(src);
        let cols = if t.shape().len() == 1 { 1 } else { t.cols() };
        let rows = if t.shape().len() == 1 { t.len() } else { t.rows() };
        if rows != dst.len() {
            return Err(dim_err("scatter_add_rows", t.shape(), &[dst.len()]));
        }
        check_index("scatter_add_rows", dst, out_rows)?;
        let mut out = vec![T::zero(); out_rows * cols];
        for (j, &i) in dst.iter().enumerate() {
            add_into(&mut out[i * cols..(i + 1) * cols], &t.data()[j * cols..(j + 1) * cols]);
        }
        Ok(self.push(vec![out_rows, cols], out, Op::ScatterAddRows(src, dst.clone()), &[src]))
    }

    /// Softmax over the entries of `scores` that share a destination id.
    pub fn segment_softmax(&mut self, scores: Var, dst: &Arc<[usize]>) -> Result<Var> {
        let t = self.value(scores);
        if t.len() != dst.len() {
            return Err(dim_err("segment_softmax", t.shape(), &[dst.len()]));
        }
        let segs = dst.iter().max().map_or(0, |&m| m + 1);
        let mut maxv = vec![T::neg_infinity(); segs];
        for (&s, &d) in t.data().iter().zip(dst.iter()) {
            maxv[d] = maxv[d].max(s);
        }
        let mut out: Vec<T> = t.data().iter().zip(dst.iter()).map(|(&s, &d)| (s - maxv[d]).exp()).collect();
        let mut denom = vec![T::zero(); segs];
        for (&e, &d) in out.iter().zip(dst.iter()) {
            denom[d] += e;
        }
        for (e, &d) in out.iter_mut().zip(dst.iter()) {
            *e /= denom[d];
        }
        let s = t.shape().to_vec();
        Ok(self.push(s, out, Op::SegmentSoftmax(scores, dst.clone()), &[scores]))
    }

    /// Scales row `i` of `x` by `s[i]`; `s` may be `[n]` or `[n×1]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let sv = self.data(s);
        if sv.len() != rows {
            return Err(dim_err("row_scale", t.shape(), self.shape(s)));
        }
        let mut out = t.data().to_vec();
        if cols > 0 {
            for (row, &c) in out.chunks_exact_mut(cols).zip(sv) {
                row.iter_mut().for_each(|v| *v *= c);
            }
        }
        let sh = t.shape().to_vec();
        Ok(self.push(sh, out, Op::RowScale(x, s), &[x, s]))
    }

    /// Normalizes each row to zero mean and unit (biased) variance, then applies `gain` and `bias`.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "layer_norm_rows")?;
        if d == 0 {
            return Err(dim_err("layer_norm_rows", self.shape(x), &[1]));
        }
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(dim_err("layer_norm_rows", self.shape(x), self.shape(gain)));
        }
        let dn = T::from_usize_lossy(d);
        let xs = self.data(x);
        let g = self.data(gain);
        let b = self.data(bias);
        let mut normalized = vec![T::zero(); n * d];
        let mut inv_std = vec![T::zero(); n];
        let mut out = vec![T::zero(); n * d];
        for (((row, nrow), orow), r) in xs
            .chunks_exact(d)
            .zip(normalized.chunks_exact_mut(d))
            .zip(out.chunks_exact_mut(d))
            .zip(&mut inv_std)
        {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            *r = T::one() / (var + eps).sqrt();
            for (xh, &v) in nrow.iter_mut().zip(row) {
                *xh = (v - mean) * *r;
            }
            for (((o, &xh), &gj), &bj) in orow.iter_mut().zip(nrow.iter()).zip(g).zip(b) {
                *o = xh * gj + bj;
            }
        }
        Ok(self.push(
            vec![n, d],
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits[n×C]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = self.matrix_dims(logits, "cross_entropy")?;
        if labels.len() != n {
            return Err(dim_err("cross_entropy", self.shape(logits), &[labels.len()]));
        }
        check_index("cross_entropy", labels, c)?;
        let mut probs = Vec::with_capacity(n * c);
        let mut loss = T::zero();
        for (row, &y) in self.data(logits).chunks_exact(c.max(1)).zip(labels) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lz = z.ln();
            loss += lz - (row[y] - m);
            probs.extend(row.iter().map(|&v| (v - m).exp() / z));
        }
        let nn = T::from_usize_lossy(n.max(1));
        Ok(self.push(
            vec![1],
            vec![loss / nn],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::SumAll(x), &[x])
    }

    /// Column-wise sum over rows: `[n×d] -> [d]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let out = self.column_sums(x);
        self.push(vec![out.len()], out, Op::SumRows(x), &[x])
    }

    /// Column-wise mean over rows: `[n×d] -> [d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).rows();
        if n == 0 {
            return Err(dim_err("mean_rows", self.shape(x), &[1]));
        }
        let nn = T::from_usize_lossy(n);
        let out: Vec<T> = self.column_sums(x).into_iter().map(|v| v / nn).collect();
        Ok(self.push(vec![out.len()], out, Op::MeanRows(x), &[x]))
    }

    fn column_sums(&self, x: Var) -> Vec<T> {
        let t = self.value(x);
        let cols = t.cols();
        let mut out = vec![T::zero(); cols];
        if cols > 0 {
            for row in t.data().chunks_exact(cols) {
                add_into(&mut out, row);
            }
        }
        out
    }

    /// Propagates adjoints from the scalar `loss` back to every leaf that
    /// requires a gradient. Consumes the tape; each op is visited once, in
    /// reverse record order.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let Tape { mut nodes, params } = self;
        if !nodes[loss.0].value.is_scalar() {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: nodes[loss.0].value.shape().to_vec(),
            });
        }
        nodes.truncate(loss.0 + 1);
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..nodes.len()).rev() {
            if !nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let (before, rest) = nodes.split_at(id);
            let node = &rest[0];
            backprop_node(before, node, &g, &mut grads);
            // Values are only read by consumers, which have all been visited.
            nodes[id].value = Tensor::zeros(&[0]);
        }

        for (id, n) in nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.needs_grad {
                grads[id] = None;
            } else if grads[id].is_none() {
                grads[id] = Some(vec![T::zero(); n.value.len()]);
            }
        }
        Ok(Gradients { grads, params })
    }
}

/// `tanh` through a single `exp`; libm's `tanhf` is several times slower.
fn fast_tanh<T: Scalar>(v: T) -> T {
    let e = (-(v.abs() + v.abs())).exp();
    let t = (T::one() - e) / (T::one() + e);
    if v < T::zero() {
        -t
    } else {
        t
    }
}

/// Accumulates the contribution `f` into `grads[v]` when `v` needs a gradient.
fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    v: Var,
    f: impl FnOnce(&mut [T]),
) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let len = nodes[v.0].value.len();
    let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
    f(slot);
}

fn backprop_node<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let val = |v: Var| nodes[v.0].value.data();
    let out = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let n = nodes[b.0].value.shape()[1];
            accumulate(nodes, grads, *a, |ga| matmul_a_bt_acc(g, val(*b), ga, m, k, n));
            accumulate(nodes, grads, *b, |gb| matmul_at_b_acc(val(*a), g, gb, m, k, n));
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |ga| add_into(ga, g));
            accumulate(nodes, grads, *b, |gb| add_into(gb, g));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |ga| add_into(ga, g));
            accumulate(nodes, grads, *b, |gb| {
                gb.iter_mut().zip(g).for_each(|(d, &s)| *d -= s)
            });
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |ga| {
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(bv) {
                    *d += s * y;
                }
            });
            accumulate(nodes, grads, *b, |gb| {
                for ((d, &s), &x) in gb.iter_mut().zip(g).zip(av) {
                    *d += s * x;
                }
            });
        }
        Op::AddRowBias(x, b) => {
            accumulate(nodes, grads, *x, |gx| add_into(gx, g));
            let cols = nodes[b.0].value.len();
            accumulate(nodes, grads, *b, |gb| {
                if cols > 0 {
                    for row in g.chunks_exact(cols) {
                        add_into(gb, row);
                    }
                }
            });
        }
        Op::Scale(x, c) => {
            accumulate(nodes, grads, *x, |gx| {
                gx.iter_mut().zip(g).for_each(|(d, &s)| *d += s * *c)
            });
        }
        Op::MulScalar(x, s) => {
            let c = val(*s)[0];
            let xv = val(*x);
            accumulate(nodes, grads, *x, |gx| {
                gx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * c)
            });
            accumulate(nodes, grads, *s, |gs| {
                gs[0] += g.iter().zip(xv).map(|(&a, &b)| a * b).sum::<T>();
            });
        }
        Op::Unary(x, kind, slope) => {
            let xv = val(*x);
            let one = T::one();
            accumulate(nodes, grads, *x, |gx| {
                for (i, d) in gx.iter_mut().enumerate() {
                    let local = match kind {
                        Unary::Relu => {
                            if xv[i] > T::zero() {
                                one
                            } else {
                                T::zero()
                            }
                        }
                        Unary::LeakyRelu => {
                            if xv[i] > T::zero() {
                                one
                            } else {
                                *slope
                            }
                        }
                        Unary::Tanh => one - out[i] * out[i],
                        Unary::Sigmoid => out[i] * (one - out[i]),
                    };
                    *d += g[i] * local;
                }
            });
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = nodes[p.0].value.len();
                accumulate(nodes, grads, *p, |gp| add_into(gp, &g[offset..offset + len]));
                offset += len;
            }
        }
        Op::ConcatCols(parts) => {
            let total = node.value.cols();
            let rows = node.value.rows();
            let mut col = 0;
            for p in parts {
                let w = nodes[p.0].value.cols();
                accumulate(nodes, grads, *p, |gp| {
                    for i in 0..rows {
                        add_into(&mut gp[i * w..(i + 1) * w], &g[i * total + col..i * total + col + w]);
                    }
                });
                col += w;
            }
        }
        Op::SliceRows(x, start) => {
            let cols = node.value.cols();
            let off = start * cols;
            accumulate(nodes, grads, *x, |gx| add_into(&mut gx[off..off + g.len()], g));
        }
        Op::SliceCols(x, start) => {
            let w = node.value.cols();
            let cols = nodes[x.0].value.cols();
            let rows = node.value.rows();
            accumulate(nodes, grads, *x, |gx| {
                for i in 0..rows {
                    add_into(&mut gx[i * cols + start..i * cols + start + w], &g[i * w..(i + 1) * w]);
                }
            });
        }
        Op::GatherRows(x, index) => {
            let cols = node.value.cols();
            accumulate(nodes, grads, *x, |gx| {
                for (j, &i) in index.iter().enumerate() {
                    add_into(&mut gx[i * cols..(i + 1) * cols], &g[j * cols..(j + 1) * cols]);
                }
            });
        }
        Op::ScatterAddRows(src, dst) => {
            let cols = node.value.cols();
            accumulate(nodes, grads, *src, |gs| {
                for (j, &i) in dst.iter().enumerate() {
                    add_into(&mut gs[j * cols..(j + 1) * cols], &g[i * cols..(i + 1) * cols]);
                }
            });
        }
        Op::SegmentSoftmax(scores, dst) => {
            let segs = dst.iter().max().map_or(0, |&m| m + 1);
            let mut dot = vec![T::zero(); segs];
            for ((&y, &gy), &d) in out.iter().zip(g).zip(dst.iter()) {
                dot[d] += y * gy;
            }
            accumulate(nodes, grads, *scores, |gs| {
                for (e, d) in gs.iter_mut().enumerate() {
                    *d += out[e] * (g[e] - dot[dst[e]]);
                }
            });
        }
        Op::RowScale(x, s) => {
            let cols = nodes[x.0].value.cols();
            let (xv, sv) = (val(*x), val(*s));
            accumulate(nodes, grads, *x, |gx| {
                for (i, &c) in sv.iter().enumerate() {
                    for j in i * cols..(i + 1) * cols {
                        gx[j] += g[j] * c;
                    }
                }
            });
            accumulate(nodes, grads, *s, |gs| {
                for (i, d) in gs.iter_mut().enumerate() {
                    let r = i * cols..(i + 1) * cols;
                    *d += g[r.clone()].iter().zip(&xv[r]).map(|(&a, &b)| a * b).sum::<T>();
                }
            });
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let d = node.value.cols();
            let gv = val(*gain);
            accumulate(nodes, grads, *gain, |gg| {
                for (grow, nrow) in g.chunks_exact(d).zip(normalized.chunks_exact(d)) {
                    for ((o, &a), &b) in gg.iter_mut().zip(grow).zip(nrow) {
                        *o += a * b;
                    }
                }
            });
            accumulate(nodes, grads, *bias, |gb| {
                for grow in g.chunks_exact(d) {
                    add_into(gb, grow);
                }
            });
            let dn = T::from_usize_lossy(d);
            accumulate(nodes, grads, *x, |gx| {
                let mut gh = vec![T::zero(); d];
                for (((grow, nrow), gxrow), &r) in g
                    .chunks_exact(d)
                    .zip(normalized.chunks_exact(d))
                    .zip(gx.chunks_exact_mut(d))
                    .zip(inv_std)
                {
                    let mut mean_g = T::zero();
                    let mut mean_gx = T::zero();
                    for (((h, &a), &w), &xh) in gh.iter_mut().zip(grow).zip(gv).zip(nrow) {
                        *h = a * w;
                        mean_g += *h;
                        mean_gx += *h * xh;
                    }
                    mean_g /= dn;
                    mean_gx /= dn;
                    for ((o, &h), &xh) in gxrow.iter_mut().zip(&gh).zip(nrow) {
                        *o += r * (h - mean_g - xh * mean_gx);
                    }
                }
            });
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let n = labels.len();
            let c = nodes[logits.0].value.cols();
            let scale = g[0] / T::from_usize_lossy(n.max(1));
            accumulate(nodes, grads, *logits, |gl| {
                for (i, &y) in labels.iter().enumerate() {
                    for j in 0..c {
                        let mut p = probs[i * c + j];
                        if j == y {
                            p -= T::one();
                        }
                        gl[i * c + j] += p * scale;
                    }
                }
            });
        }
        Op::SumAll(x) => {
            accumulate(nodes, grads, *x, |gx| gx.iter_mut().for_each(|d| *d += g[0]));
        }
        Op::SumRows(x) | Op::MeanRows(x) => {
            let t = &nodes[x.0].value;
            let cols = t.cols();
            let f = if matches!(node.op, Op::MeanRows(_)) {
                T::one() / T::from_usize_lossy(t.rows())
            } else {
                T::one()
            };
            accumulate(nodes, grads, *x, |gx| {
                if cols > 0 {
                    for row in gx.chunks_exact_mut(cols) {
                        for (d, &s) in row.iter_mut().zip(g) {
                            *d += s * f;
                        }
                    }
                }
            });
        }
    }
}
