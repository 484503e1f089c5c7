use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index value that makes [`Graph::gather`] emit a zero (used for padding)
/// and makes [`Graph::scatter_add`] drop the element.
pub const SKIP: usize = usize::MAX;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scale * x + shift`; only the scale matters for the backward pass.
    Affine(Var, f64),
    /// Tensor times a one-element tensor.
    MulScalar(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    Pow(Var, f64),
    Sigmoid(Var),
    /// Row-wise softmax of a 2-D tensor.
    Softmax(Var),
    /// Mean softmax cross-entropy of 2-D logits against class labels.
    SoftmaxXent(Var, Arc<[usize]>),
    SquaredL2(Var),
    /// `1` where the input is positive, `0` elsewhere. Carries no gradient.
    Step(Var),
    /// `1` where the input is positive, `slope` elsewhere. Carries no gradient.
    LeakyStep(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::MulScalar(..) => "mul_scalar",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Gather(..) => "gather",
            Op::ScatterAdd(..) => "scatter_add",
            Op::Pow(..) => "pow",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softmax(..) => "softmax",
            Op::SoftmaxXent(..) => "softmax_xent",
            Op::SquaredL2(..) => "squared_l2",
            Op::Step(..) => "step",
            Op::LeakyStep(..) => "leaky_step",
        }
    }

    fn inputs(&self) -> ([Option<Var>; 2], bool) {
        let differentiable = !matches!(self, Op::Step(..) | Op::LeakyStep(..));
        let ins = match *self {
            Op::Leaf => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulScalar(a, b) | Op::MatMul(a, b) => {
                [Some(a), Some(b)]
            }
            Op::Affine(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Gather(a, _)
            | Op::ScatterAdd(a, _)
            | Op::Pow(a, _)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::SoftmaxXent(a, _)
            | Op::SquaredL2(a)
            | Op::Step(a)
            | Op::LeakyStep(a) => [Some(a), None],
        };
        (ins, differentiable)
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation graph with reverse-mode differentiation.
///
/// Every backward rule is itself built from graph primitives, so gradients
/// returned by [`Graph::grad_with_graph`] can be differentiated again.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(Error::UnknownNode(v.0))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor> {
        self.node(v).map(|n| &n.value)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let (ins, differentiable) = op.inputs();
        let requires_grad = differentiable
            && ins.iter().flatten().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { op, value, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(op, value)
    }

    fn map(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = &self.node(a)?.value;
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(op, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.map(Op::Affine(a, scale), a, |x| scale * x + shift)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(Op::Affine(a, c), a, |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `a * s` where `s` holds exactly one element.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = &self.node(s)?.value;
        if ts.numel() != 1 {
            return Err(Error::shape("mul_scalar", format!("scalar operand has shape {:?}", ts.shape())));
        }
        let c = ts.item();
        self.map(Op::MulScalar(a, s), a, |x| x * c)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (m, k, n) = match (ta.shape(), tb.shape()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            (sa, sb) => return Err(Error::shape("matmul", format!("{:?} x {:?}", sa, sb))),
        };
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        self.push(Op::MatMul(a, b), value)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = &self.node(a)?.value;
        let (r, c) = match ta.shape() {
            [r, c] => (*r, *c),
            s => return Err(Error::shape("transpose", format!("expected 2-D, got {:?}", s))),
        };
        let d = ta.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        self.push(Op::Transpose(a), value)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.node(a)?.value.clone().reshape(shape)?;
        self.push(Op::Reshape(a), value)
    }

    /// `out[i] = a[idx[i]]`, or zero where `idx[i] == SKIP`.
    pub fn gather(&mut self, a: Var, idx: Arc<[usize]>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let ta = &self.node(a)?.value;
        if shape.iter().product::<usize>() != idx.len() {
            return Err(Error::shape("gather", format!("{} indices for shape {:?}", idx.len(), shape)));
        }
        let d = ta.data();
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx.iter() {
            if i == SKIP {
                out.push(0.0);
            } else {
                out.push(*d.get(i).ok_or_else(|| {
                    Error::shape("gather", format!("index {} out of {}", i, d.len()))
                })?);
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(Op::Gather(a, idx), value)
    }

    /// `out[idx[i]] += a[i]` into a zero tensor of `shape`; `SKIP` drops the element.
    pub fn scatter_add(&mut self, a: Var, idx: Arc<[usize]>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let ta = &self.node(a)?.value;
        if ta.numel() != idx.len() {
            return Err(Error::shape("scatter_add", format!("{} indices for {} elements", idx.len(), ta.numel())));
        }
        let mut out = vec![0.0; shape.iter().product()];
        for (&i, v) in idx.iter().zip(ta.data()) {
            if i == SKIP {
                continue;
            }
            let slot = out
                .get_mut(i)
                .ok_or_else(|| Error::shape("scatter_add", format!("index {} out of range", i)))?;
            *slot += v;
        }
        let value = Tensor::new(shape, out)?;
        self.push(Op::ScatterAdd(a, idx), value)
    }

    pub fn pow(&mut self, a: Var, p: f64) -> Result<Var> {
        self.map(Op::Pow(a, p), a, |x| libm::pow(x, p))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Sigmoid(a), a, |x| {
            if x >= 0.0 {
                1.0 / (1.0 + libm::exp(-x))
            } else {
                let e = libm::exp(x);
                e / (1.0 + e)
            }
        })
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = &self.node(a)?.value;
        if ta.shape().len() != 2 {
            return Err(Error::shape("softmax", format!("expected 2-D, got {:?}", ta.shape())));
        }
        let (_, c) = ta.rows_cols();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - max);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        self.push(Op::Softmax(a), value)
    }

    /// Mean cross-entropy of row-wise softmax(logits) against `labels`.
    pub fn softmax_xent(&mut self, logits: Var, labels: Arc<[usize]>) -> Result<Var> {
        let t = &self.node(logits)?.value;
        let (b, c) = match t.shape() {
            [b, c] => (*b, *c),
            s => return Err(Error::shape("softmax_xent", format!("expected 2-D, got {:?}", s))),
        };
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if labels.len() != b {
            return Err(Error::shape("softmax_xent", format!("{} labels for {} rows", labels.len(), b)));
        }
        let mut total = 0.0;
        for (row, &y) in t.data().chunks(c).zip(labels.iter()) {
            if y >= c {
                return Err(Error::LabelOutOfRange { label: y, classes: c });
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            total += lse - row[y];
        }
        self.push(Op::SoftmaxXent(logits, labels), Tensor::scalar(total / b as f64))
    }

    pub fn squared_l2(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.data().iter().map(|v| v * v).sum();
        self.push(Op::SquaredL2(a), Tensor::scalar(s))
    }

    pub fn step(&mut self, a: Var) -> Result<Var> {
        self.map(Op::Step(a), a, |x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_step(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.map(Op::LeakyStep(a), a, |x| if x > 0.0 { 1.0 } else { slope })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mask = self.step(a)?;
        self.mul(a, mask)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let mask = self.leaky_step(a, slope)?;
        self.mul(a, mask)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?.value.numel();
        self.scatter_add(a, vec![0usize; n].into(), vec![1])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?.value.numel();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        self.sum(m)
    }

    /// `[n]` → `[rows, n]` by repeating the vector on every row.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let n = self.node(a)?.value.numel();
        let idx: Vec<usize> = (0..rows * n).map(|i| i % n).collect();
        self.gather(a, idx.into(), vec![rows, n])
    }

    /// `[rows, n]` → `[n]` column sums.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.node(a)?.value.rows_cols();
        let total = self.node(a)?.value.numel();
        let idx: Vec<usize> = (0..total).map(|i| i % n).collect();
        self.scatter_add(a, idx.into(), vec![n])
    }

    /// `[rows, n]` → `[rows, 1]` row sums.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, n) = self.node(a)?.value.rows_cols();
        let idx: Vec<usize> = (0..r * n).map(|i| i / n).collect();
        self.scatter_add(a, idx.into(), vec![r, 1])
    }

    /// `[rows, 1]` → `[rows, n]`.
    pub fn broadcast_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let r = self.node(a)?.value.numel();
        let idx: Vec<usize> = (0..r * n).map(|i| i / n).collect();
        self.gather(a, idx.into(), vec![r, n])
    }

    /// `x[B, N] + b[N]` with the bias repeated on every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (rows, n) = self.node(x)?.value.rows_cols();
        if self.node(b)?.value.numel() != n {
            return Err(Error::shape("add_bias", format!("bias of {} for {} columns", self.value(b).numel(), n)));
        }
        let bb = self.broadcast_rows(b, rows)?;
        let bb = self.reshape(bb, self.shape(x).to_vec())?;
        self.add(x, bb)
    }

    fn zeros_like(&mut self, v: Var) -> Var {
        let shape = self.shape(v).to_vec();
        self.constant(Tensor::zeros(shape))
    }

    /// Gradients of scalar `output` with respect to `wrt`, as plain tensors.
    ///
    /// Nodes created during the backward pass are discarded afterwards.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let mark = self.nodes.len();
        let result = self.backward(output, wrt).map(|adj| {
            adj.iter()
                .zip(wrt)
                .map(|(g, w)| match g {
                    Some(g) => self.nodes[g.0].value.clone(),
                    None => Tensor::zeros(self.shape(*w).to_vec()),
                })
                .collect()
        });
        self.nodes.truncate(mark);
        result
    }

    /// Gradients of scalar `output` with respect to `wrt`, recorded on the graph
    /// so they can be differentiated again.
    pub fn grad_with_graph(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let adj = self.backward(output, wrt)?;
        Ok(adj
            .into_iter()
            .zip(wrt)
            .map(|(g, w)| g.unwrap_or_else(|| self.zeros_like(*w)))
            .collect())
    }

    fn backward(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        let out_numel = self.node(output)?.value.numel();
        if out_numel != 1 {
            return Err(Error::NotScalar { numel: out_numel });
        }
        for w in wrt {
            self.node(*w)?;
        }
        let n = self.nodes.len();
        // Nodes that depend on at least one `wrt` node through differentiable ops.
        let mut relevant = vec![false; n];
        for w in wrt {
            relevant[w.0] = true;
        }
        for i in 0..n {
            if relevant[i] {
                continue;
            }
            let (ins, differentiable) = self.nodes[i].op.inputs();
            relevant[i] = differentiable && ins.iter().flatten().any(|v| relevant[v.0]);
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        if relevant[output.0] {
            let seed = self.constant(Tensor::full(self.shape(output).to_vec(), 1.0));
            adj[output.0] = Some(seed);
        }
        for i in (0..=output.0).rev() {
            let Some(gy) = adj[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.backward_rule(Var(i), &op, gy, &relevant)? {
                adj[input.0] = Some(match adj[input.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }
        Ok(wrt.iter().map(|w| adj[w.0]).collect())
    }

    fn backward_rule(&mut self, y: Var, op: &Op, gy: Var, need: &[bool]) -> Result<Vec<(Var, Var)>> {
        let mut out = Vec::with_capacity(2);
        let needs = |v: Var| need[v.0];
        match *op {
            Op::Leaf | Op::Step(_) | Op::LeakyStep(_) => {}
            Op::Add(a, b) => {
                if needs(a) {
                    out.push((a, gy));
                }
                if needs(b) {
                    out.push((b, gy));
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    out.push((a, gy));
                }
                if needs(b) {
                    out.push((b, self.neg(gy)?));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((a, self.mul(gy, b)?));
                }
                if needs(b) {
                    out.push((b, self.mul(gy, a)?));
                }
            }
            Op::Affine(a, c) => {
                if needs(a) {
                    out.push((a, self.scale(gy, c)?));
                }
            }
            Op::MulScalar(a, s) => {
                if needs(a) {
                    out.push((a, self.mul_scalar(gy, s)?));
                }
                if needs(s) {
                    let d = self.dot(gy, a)?;
                    let shape = self.shape(s).to_vec();
                    out.push((s, self.reshape(d, shape)?));
                }
            }
            Op::MatMul(a, b) => {
                if needs(a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(gy, bt)?));
                }
                if needs(b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, gy)?));
                }
            }
            Op::Transpose(a) => {
                if needs(a) {
                    out.push((a, self.transpose(gy)?));
                }
            }
            Op::Reshape(a) => {
                if needs(a) {
                    let shape = self.shape(a).to_vec();
                    out.push((a, self.reshape(gy, shape)?));
                }
            }
            Op::Gather(a, ref idx) => {
                if needs(a) {
                    let shape = self.shape(a).to_vec();
                    out.push((a, self.scatter_add(gy, idx.clone(), shape)?));
                }
            }
            Op::ScatterAdd(a, ref idx) => {
                if needs(a) {
                    let shape = self.shape(a).to_vec();
                    out.push((a, self.gather(gy, idx.clone(), shape)?));
                }
            }
            Op::Pow(a, p) => {
                if needs(a) && p != 0.0 {
                    let d = if p == 1.0 {
                        gy
                    } else {
                        let lower = self.pow(a, p - 1.0)?;
                        let lower = self.scale(lower, p)?;
                        self.mul(gy, lower)?
                    };
                    out.push((a, d));
                }
            }
            Op::Sigmoid(a) => {
                if needs(a) {
                    let one_minus = self.affine(y, -1.0, 1.0)?;
                    let local = self.mul(y, one_minus)?;
                    out.push((a, self.mul(gy, local)?));
                }
            }
            Op::Softmax(a) => {
                if needs(a) {
                    let cols = self.shape(y)[1];
                    let gs = self.mul(gy, y)?;
                    let r = self.sum_cols(gs)?;
                    let rb = self.broadcast_cols(r, cols)?;
                    let centered = self.sub(gy, rb)?;
                    out.push((a, self.mul(y, centered)?));
                }
            }
            Op::SoftmaxXent(a, ref labels) => {
                if needs(a) {
                    let (rows, cols) = (self.shape(a)[0], self.shape(a)[1]);
                    let mut onehot = Tensor::zeros(vec![rows, cols]);
                    for (r, &l) in labels.iter().enumerate() {
                        onehot.data_mut()[r * cols + l] = 1.0;
                    }
                    let onehot = self.constant(onehot);
                    let p = self.softmax(a)?;
                    let diff = self.sub(p, onehot)?;
                    let diff = self.scale(diff, 1.0 / rows as f64)?;
                    out.push((a, self.mul_scalar(diff, gy)?));
                }
            }
            Op::SquaredL2(a) => {
                if needs(a) {
                    let twice = self.scale(a, 2.0)?;
                    out.push((a, self.mul_scalar(twice, gy)?));
                }
            }
        }
        Ok(out)
    }
}
