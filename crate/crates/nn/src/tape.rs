//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation as a node holding its output value and
//! whatever the backward pass needs. Nodes are appended in evaluation order,
//! so the tape is acyclic by construction and the backward pass is a single
//! reverse sweep.
//!
//! Shape errors inside an op are programming errors and panic; the layer
//! helpers in [`crate::layers`] validate user-supplied shapes up front.

use fg_core::tensor::{argmax_except, log_sum_exp, reduce_except, strides_of, DenseTensor, ReduceMode};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Concat(Vec<Var>),
    StackColumns(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    SegmentSumRows(Var, Vec<usize>),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    LseExcept(Var, usize),
    MaxExcept(Var, Vec<usize>),
    TensorSum(Vec<Var>),
    SumAll(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogNormalize(Var, bool),
    GraphNorm { x: Var, inv_std: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseTensor,
    op: Op,
}

/// Records a differentiable program.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    branch_signature: u64,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> DenseTensor {
    DenseTensor::new(shape, data).expect("op produced consistent shape")
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n, d] => (*n, *d),
        [d] => (1, *d),
        _ => panic!("expected a matrix or vector, got shape {shape:?}"),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseTensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let d = self.data(v);
        assert_eq!(d.len(), 1, "not a scalar");
        d[0]
    }

    /// Hash of every branch taken by kinked ops (relu signs, abs signs, max
    /// positions). Two evaluations with equal signatures share one smooth
    /// piece of the program.
    pub fn branch_signature(&self) -> u64 {
        self.branch_signature
    }

    fn mark_branch(&mut self, bit: u64) {
        self.branch_signature = (self.branch_signature ^ bit)
            .wrapping_mul(0x0000_0100_0000_01b3)
            .rotate_left(5);
    }

    fn push(&mut self, value: DenseTensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node; gradients reach it but do not flow further.
    pub fn leaf(&mut self, value: DenseTensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Var {
        self.leaf(tensor(vec![values.len()], values))
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.leaf(tensor(vec![], vec![x]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x).map(f);
        self.push(v, op)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise op on mismatched shapes");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        self.push(tensor(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + shift` elementwise with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine(x, scale))
    }

    /// Adds vector `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (n, d) = rows_cols(self.shape(x));
        assert_eq!(self.shape(b), &[d], "row bias length");
        let bv = self.data(b).to_vec();
        let data = self
            .data(x)
            .chunks(d)
            .flat_map(|row| row.iter().zip(&bv).map(|(x, b)| x + b).collect::<Vec<_>>())
            .collect();
        let shape = self.shape(x).to_vec();
        debug_assert_eq!(n * d, self.data(x).len());
        self.push(tensor(shape, data), Op::AddRow(x, b))
    }

    /// `[n×k] · [k×m]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let (n, k) = rows_cols(self.shape(x));
        let (k2, m) = rows_cols(self.shape(w));
        assert_eq!(k, k2, "matmul inner dimensions");
        let xd = self.data(x);
        let wd = self.data(w);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &xd[i * k..(i + 1) * k];
            let o = &mut out[i * m..(i + 1) * m];
            for (p, &xv) in row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (ov, &wv) in o.iter_mut().zip(&wd[p * m..(p + 1) * m]) {
                    *ov += xv * wv;
                }
            }
        }
        self.push(tensor(vec![n, m], out), Op::MatMul(x, w))
    }

    /// `W x` for `W: [m×k]`, `x: [k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (m, k) = rows_cols(self.shape(w));
        assert_eq!(self.shape(x), &[k], "matvec dimensions");
        let wd = self.data(w);
        let xd = self.data(x);
        let out = (0..m)
            .map(|i| wd[i * k..(i + 1) * k].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        self.push(tensor(vec![m], out), Op::MatVec(w, x))
    }

    /// Flat concatenation into a vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.data(p).to_vec()).collect();
        self.push(tensor(vec![data.len()], data), Op::Concat(parts.to_vec()))
    }

    /// Equal-length vectors as the columns of an `[n×k]` matrix.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Var {
        assert!(!cols.is_empty(), "stack of nothing");
        let n = self.data(cols[0]).len();
        let k = cols.len();
        let mut out = vec![0.0; n * k];
        for (j, &c) in cols.iter().enumerate() {
            let d = self.data(c);
            assert_eq!(d.len(), n, "stack_columns lengths differ");
            for (i, &v) in d.iter().enumerate() {
                out[i * k + j] = v;
            }
        }
        self.push(tensor(vec![n, k], out), Op::StackColumns(cols.to_vec()))
    }

    /// Equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let d = self.data(rows[0]).len();
        let flat = self.concat(rows);
        self.reshape(flat, vec![rows.len(), d])
    }

    /// Contiguous flat range `[start, start+len)` as a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let data = self.data(x)[start..start + len].to_vec();
        self.push(tensor(vec![len], data), Op::Slice(x, start))
    }

    pub fn row(&mut self, x: Var, r: usize) -> Var {
        let (_, d) = rows_cols(self.shape(x));
        self.slice(x, r * d, d)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let data = self.data(x).to_vec();
        self.push(tensor(shape, data), Op::Reshape(x))
    }

    /// Rows of `x` selected (with repetition) by `idx`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let (_, d) = rows_cols(self.shape(x));
        let xd = self.data(x);
        let data = idx.iter().flat_map(|&r| xd[r * d..(r + 1) * d].to_vec()).collect();
        self.push(tensor(vec![idx.len(), d], data), Op::GatherRows(x, idx.to_vec()))
    }

    /// Sums the rows of `x` into `segments` buckets; row `r` goes to `seg[r]`.
    /// Rows are added in index order.
    pub fn segment_sum_rows(&mut self, x: Var, seg: &[usize], segments: usize) -> Var {
        let (n, d) = rows_cols(self.shape(x));
        assert_eq!(seg.len(), n, "one segment id per row");
        let xd = self.data(x);
        let mut out = vec![0.0; segments * d];
        for (r, &s) in seg.iter().enumerate() {
            for (o, v) in out[s * d..(s + 1) * d].iter_mut().zip(&xd[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        self.push(tensor(vec![segments, d], out), Op::SegmentSumRows(x, seg.to_vec()))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        for i in 0..self.data(x).len() {
            let bit = (self.data(x)[i] > 0.0) as u64;
            self.mark_branch(bit);
        }
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        for i in 0..self.data(x).len() {
            let bit = (self.data(x)[i] > 0.0) as u64;
            self.mark_branch(bit);
        }
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        for i in 0..self.data(x).len() {
            let bit = (self.data(x)[i] >= 0.0) as u64;
            self.mark_branch(bit);
        }
        self.unary(x, f64::abs, Op::Abs(x))
    }

    /// Log-sum-exp over every axis but `axis`.
    pub fn logsumexp_except(&mut self, x: Var, axis: usize) -> Var {
        let out = reduce_except(self.value(x), axis, ReduceMode::LogSumExp).expect("axis in range");
        self.push(tensor(vec![out.len()], out), Op::LseExcept(x, axis))
    }

    /// Max over every axis but `axis`; the subgradient goes to the first
    /// maximal entry.
    pub fn max_except(&mut self, x: Var, axis: usize) -> Var {
        let arg = argmax_except(self.value(x), axis).expect("axis in range");
        for &a in &arg {
            self.mark_branch(a as u64);
        }
        let xd = self.data(x);
        let out: Vec<f64> = arg.iter().map(|&a| xd[a]).collect();
        self.push(tensor(vec![out.len()], out), Op::MaxExcept(x, arg))
    }

    /// Outer sum of vectors.
    pub fn tensor_sum(&mut self, parts: &[Var]) -> Var {
        let refs: Vec<&[f64]> = parts.iter().map(|&p| self.data(p)).collect();
        let t = fg_core::tensor_sum(&refs).expect("non-empty vector operands");
        self.push(t, Op::TensorSum(parts.to_vec()))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(tensor(vec![], vec![s]), Op::SumAll(x))
    }

    /// Softmax over the last axis (rows of a matrix, or a whole vector).
    pub fn softmax(&mut self, x: Var) -> Var {
        let d = *self.shape(x).last().expect("rank >= 1");
        let data = self
            .data(x)
            .chunks(d)
            .flat_map(|row| {
                let z = log_sum_exp(row);
                row.iter().map(move |v| (v - z).exp()).collect::<Vec<_>>()
            })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(tensor(shape, data), Op::SoftmaxRows(x))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let d = *self.shape(x).last().expect("rank >= 1");
        let data = self
            .data(x)
            .chunks(d)
            .flat_map(|row| {
                let z = log_sum_exp(row);
                row.iter().map(move |v| v - z).collect::<Vec<_>>()
            })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(tensor(shape, data), Op::LogSoftmaxRows(x))
    }

    /// `x − LSE(all entries of x)`: a log-space distribution over the whole
    /// tensor. An all `−∞` input is passed through unchanged.
    pub fn log_normalize(&mut self, x: Var) -> Var {
        let z = log_sum_exp(self.data(x));
        if z.is_finite() {
            self.unary(x, |v| v - z, Op::LogNormalize(x, true))
        } else {
            self.unary(x, |v| v, Op::LogNormalize(x, false))
        }
    }

    /// Per-column standardisation over the rows of `x`:
    /// `(x − μ) / sqrt(σ² + eps)` with population variance.
    pub fn graph_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, d) = rows_cols(self.shape(x));
        let xd = self.data(x);
        let mut mean = vec![0.0; d];
        for row in xd.chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in xd.chunks(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n as f64 + eps).sqrt()).collect();
        let data = xd
            .chunks(d)
            .flat_map(|row| {
                row.iter()
                    .zip(&mean)
                    .zip(&inv_std)
                    .map(|((v, m), is)| (v - m) * is)
                    .collect::<Vec<_>>()
            })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(tensor(shape, data), Op::GraphNorm { x, inv_std })
    }

    /// Gradients of scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.data(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
            // keep interior gradients available for inspection
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], g);
                accumulate(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                accumulate(&mut grads[b.0], &neg);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                let ga: Vec<f64> = g.iter().zip(bd).map(|(g, b)| g * b).collect();
                let gb: Vec<f64> = g.iter().zip(ad).map(|(g, a)| g * a).collect();
                accumulate(&mut grads[a.0], &ga);
                accumulate(&mut grads[b.0], &gb);
            }
            Op::Affine(x, scale) => {
                let gx: Vec<f64> = g.iter().map(|v| v * scale).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::AddRow(x, b) => {
                accumulate(&mut grads[x.0], g);
                let d = self.data(*b).len();
                let mut gb = vec![0.0; d];
                for row in g.chunks(d) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                accumulate(&mut grads[b.0], &gb);
            }
            Op::MatMul(x, w) => {
                let (n, k) = rows_cols(self.shape(*x));
                let (_, m) = rows_cols(self.shape(*w));
                let (xd, wd) = (self.data(*x), self.data(*w));
                let mut gx = vec![0.0; n * k];
                let mut gw = vec![0.0; k * m];
                for i in 0..n {
                    let gi = &g[i * m..(i + 1) * m];
                    let xi = &xd[i * k..(i + 1) * k];
                    for p in 0..k {
                        let wp = &wd[p * m..(p + 1) * m];
                        gx[i * k + p] = gi.iter().zip(wp).map(|(a, b)| a * b).sum();
                        let xv = xi[p];
                        if xv != 0.0 {
                            for (gwv, &gv) in gw[p * m..(p + 1) * m].iter_mut().zip(gi) {
                                *gwv += xv * gv;
                            }
                        }
                    }
                }
                accumulate(&mut grads[x.0], &gx);
                accumulate(&mut grads[w.0], &gw);
            }
            Op::MatVec(w, x) => {
                let (m, k) = rows_cols(self.shape(*w));
                let (wd, xd) = (self.data(*w), self.data(*x));
                let mut gw = vec![0.0; m * k];
                let mut gx = vec![0.0; k];
                for i in 0..m {
                    for p in 0..k {
                        gw[i * k + p] = g[i] * xd[p];
                        gx[p] += wd[i * k + p] * g[i];
                    }
                }
                accumulate(&mut grads[w.0], &gw);
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.data(*p).len();
                    accumulate(&mut grads[p.0], &g[off..off + len]);
                    off += len;
                }
            }
            Op::StackColumns(cols) => {
                let k = cols.len();
                for (j, c) in cols.iter().enumerate() {
                    let gc: Vec<f64> = g.chunks(k).map(|row| row[j]).collect();
                    accumulate(&mut grads[c.0], &gc);
                }
            }
            Op::Slice(x, start) => {
                let mut gx = vec![0.0; self.data(*x).len()];
                gx[*start..*start + g.len()].copy_from_slice(g);
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Reshape(x) => accumulate(&mut grads[x.0], g),
            Op::GatherRows(x, idx) => {
                let (_, d) = rows_cols(self.shape(*x));
                let mut gx = vec![0.0; self.data(*x).len()];
                for (r, &src) in idx.iter().enumerate() {
                    for (a, v) in gx[src * d..(src + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *a += v;
                    }
                }
                accumulate(&mut grads[x.0], &gx);
            }
            Op::SegmentSumRows(x, seg) => {
                let (_, d) = rows_cols(self.shape(*x));
                let gx: Vec<f64> = seg.iter().flat_map(|&s| g[s * d..(s + 1) * d].to_vec()).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<f64> = g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::LeakyRelu(x, slope) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { slope * g })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<f64> = g.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Exp(x) => {
                let gx: Vec<f64> = g.iter().zip(y).map(|(g, e)| g * e).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Log(x) => {
                let gx: Vec<f64> = g.iter().zip(self.data(*x)).map(|(g, v)| g / v).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Abs(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else if v < 0.0 { -g } else { 0.0 })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::LseExcept(x, axis) => {
                let xt = self.value(*x);
                let n = xt.shape()[*axis];
                let stride = strides_of(xt.shape())[*axis];
                let gx: Vec<f64> = xt
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(off, &v)| {
                        let l = (off / stride) % n;
                        if y[l].is_finite() {
                            g[l] * (v - y[l]).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::MaxExcept(x, arg) => {
                let mut gx = vec![0.0; self.data(*x).len()];
                for (l, &a) in arg.iter().enumerate() {
                    gx[a] += g[l];
                }
                accumulate(&mut grads[x.0], &gx);
            }
            Op::TensorSum(parts) => {
                let shape = node.value.shape();
                let strides = strides_of(shape);
                let mut gparts: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0; s]).collect();
                for (off, &gv) in g.iter().enumerate() {
                    for (k, gp) in gparts.iter_mut().enumerate() {
                        gp[(off / strides[k]) % shape[k]] += gv;
                    }
                }
                for (p, gp) in parts.iter().zip(&gparts) {
                    accumulate(&mut grads[p.0], gp);
                }
            }
            Op::SumAll(x) => {
                let gx = vec![g[0]; self.data(*x).len()];
                accumulate(&mut grads[x.0], &gx);
            }
            Op::SoftmaxRows(x) => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let gx: Vec<f64> = g
                    .chunks(d)
                    .zip(y.chunks(d))
                    .flat_map(|(gr, yr)| {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        gr.iter().zip(yr).map(move |(gv, yv)| yv * (gv - dot)).collect::<Vec<_>>()
                    })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::LogSoftmaxRows(x) => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let gx: Vec<f64> = g
                    .chunks(d)
                    .zip(y.chunks(d))
                    .flat_map(|(gr, yr)| {
                        let s: f64 = gr.iter().sum();
                        gr.iter().zip(yr).map(move |(gv, yv)| gv - yv.exp() * s).collect::<Vec<_>>()
                    })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::LogNormalize(x, false) => accumulate(&mut grads[x.0], g),
            Op::LogNormalize(x, true) => {
                let s: f64 = g.iter().sum();
                let gx: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv - yv.exp() * s).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::GraphNorm { x, inv_std } => {
                let (n, d) = rows_cols(node.value.shape());
                let mut mean_g = vec![0.0; d];
                let mut mean_gy = vec![0.0; d];
                for (gr, yr) in g.chunks(d).zip(y.chunks(d)) {
                    for j in 0..d {
                        mean_g[j] += gr[j];
                        mean_gy[j] += gr[j] * yr[j];
                    }
                }
                for j in 0..d {
                    mean_g[j] /= n as f64;
                    mean_gy[j] /= n as f64;
                }
                let gx: Vec<f64> = g
                    .chunks(d)
                    .zip(y.chunks(d))
                    .flat_map(|(gr, yr)| {
                        (0..d)
                            .map(|j| inv_std[j] * (gr[j] - mean_g[j] - yr[j] * mean_gy[j]))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                accumulate(&mut grads[x.0], &gx);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
