//! Dense row-major `f64` tensors and a tape-based reverse-mode autodiff graph.
//!
//! The graph is append-only: every primitive evaluates eagerly, stores its
//! output value and records the inputs it needs for the backward pass.
//! Nodes are addressed by [`Var`] handles, which are only meaningful for the
//! graph that produced them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    /// Builds a `rows.len() × width` matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("rows of unequal length"));
        }
        Self::new(&[rows.len(), width], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Draws every entry i.i.d. from `U[lo, hi]` using the caller's generator.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        check_shape(shape)?;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Seeded `U[lo, hi]` initialisation; identical seeds give bitwise-equal tensors.
pub fn init_uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, lo, hi, &mut rng)
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::shape(format!("invalid shape {shape:?}")));
    }
    Ok(())
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise primitives accepted by [`Graph::pointwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pointwise {
    Tanh,
    Sigmoid,
    Add,
    Sub,
    Mul,
    Scale(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Transpose(Var),
    Reshape(Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    Concat(Vec<Var>),
    RowMax(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Transpose(_) => "transpose",
            Op::Reshape(_) => "reshape",
            Op::Row(..) => "row",
            Op::StackRows(_) => "stack_rows",
            Op::Concat(_) => "concat",
            Op::RowMax(..) => "row_max",
            Op::Pick(..) => "pick",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a, _)
            | Op::LogSoftmax(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Row(a, _)
            | Op::RowMax(a, _)
            | Op::Pick(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::StackRows(vs) | Op::Concat(vs) => vs.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation graph. Inputs of a node always precede it, so
/// node order is a topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Primitive name and input handles of a node.
    pub fn describe(&self, v: Var) -> (&'static str, Vec<Var>) {
        let op = &self.nodes[v.0].op;
        (op.name(), op.inputs())
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product. `a` must be rank 2; `b` may be a matrix or a vector.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = matmul_values(av, bv)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn pointwise(&mut self, kind: Pointwise, args: &[Var]) -> Result<Var> {
        let arity = match kind {
            Pointwise::Tanh | Pointwise::Sigmoid | Pointwise::Scale(_) => 1,
            Pointwise::Add | Pointwise::Sub | Pointwise::Mul => 2,
        };
        if args.len() != arity {
            return Err(Error::invalid(format!(
                "{kind:?} takes {arity} argument(s), got {}",
                args.len()
            )));
        }
        match kind {
            Pointwise::Tanh => Ok(self.unary(Op::Tanh(args[0]), f64::tanh)),
            Pointwise::Sigmoid => Ok(self.unary(Op::Sigmoid(args[0]), sigmoid)),
            Pointwise::Scale(c) => Ok(self.unary(Op::Scale(args[0], c), |x| c * x)),
            Pointwise::Add => self.binary(Op::Add(args[0], args[1]), |x, y| x + y),
            Pointwise::Sub => self.binary(Op::Sub(args[0], args[1]), |x, y| x - y),
            Pointwise::Mul => self.binary(Op::Mul(args[0], args[1]), |x, y| x * y),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.pointwise(Pointwise::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.pointwise(Pointwise::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.pointwise(Pointwise::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(a, c), |x| c * x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid(a), sigmoid)
    }

    fn unary(&mut self, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let a = op.inputs()[0];
        let src = self.value(a);
        let value = Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&x| f(x)).collect(),
        };
        self.push(op, value)
    }

    fn binary(&mut self, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let ins = op.inputs();
        let (a, b) = (self.value(ins[0]), self.value(ins[1]));
        if a.shape != b.shape {
            return Err(Error::shape(format!(
                "{}: {:?} vs {:?}",
                op.name(),
                a.shape,
                b.shape
            )));
        }
        let value = Tensor {
            shape: a.shape.clone(),
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        };
        Ok(self.push(op, value))
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let lanes = Lanes::new(src.shape(), axis)?;
        let mut out = src.data.clone();
        lanes.for_each(|idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in idx.clone() {
                out[i] = (out[i] - m).exp();
                z += out[i];
            }
            for i in idx {
                out[i] /= z;
            }
        });
        let value = Tensor {
            shape: src.shape.clone(),
            data: out,
        };
        Ok(self.push(Op::Softmax(x, axis), value))
    }

    /// Numerically stable `log(softmax(x))` along `axis`.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let lanes = Lanes::new(src.shape(), axis)?;
        let mut out = src.data.clone();
        lanes.for_each(|idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + idx.clone().map(|i| (out[i] - m).exp()).sum::<f64>().ln();
            for i in idx {
                out[i] -= lse;
            }
        });
        let value = Tensor {
            shape: src.shape.clone(),
            data: out,
        };
        Ok(self.push(Op::LogSoftmax(x, axis), value))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = as_matrix(src, "transpose")?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src.data[i * c + j];
            }
        }
        let value = Tensor {
            shape: vec![c, r],
            data,
        };
        Ok(self.push(Op::Transpose(x), value))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let src = self.value(x);
        let (r, _) = as_matrix(src, "row")?;
        if i >= r {
            return Err(Error::shape(format!("row {i} out of range for {r} rows")));
        }
        let value = Tensor::vector(src.row(i).to_vec());
        Ok(self.push(Op::Row(x, i), value))
    }

    /// Stacks equally long vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::shape("stack_rows of nothing"))?;
        let width = self.value(*first).len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.rank() != 1 || v.len() != width {
                return Err(Error::shape(format!(
                    "stack_rows: expected vectors of length {width}, got {:?}",
                    v.shape
                )));
            }
            data.extend_from_slice(&v.data);
        }
        let value = Tensor {
            shape: vec![rows.len(), width],
            data,
        };
        Ok(self.push(Op::StackRows(rows.to_vec()), value))
    }

    /// Concatenation along the last axis. All parts share their leading dims.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let lead = {
            let s = self.shape(*first);
            s[..s.len() - 1].to_vec()
        };
        let outer: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape(format!(
                    "concat: incompatible shape {s:?} (leading dims {lead:?})"
                )));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data[o * w..(o + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor { shape, data };
        Ok(self.push(Op::Concat(parts.to_vec()), value))
    }

    /// Per-row maximum over the listed columns of a matrix.
    pub fn row_max(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = as_matrix(src, "row_max")?;
        if cols.is_empty() || cols.iter().any(|&j| j >= c) {
            return Err(Error::shape(format!("row_max: bad columns {cols:?} for width {c}")));
        }
        let mut data = Vec::with_capacity(r);
        let mut arg = Vec::with_capacity(r);
        for i in 0..r {
            let row = src.row(i);
            let best = cols
                .iter()
                .copied()
                .fold(cols[0], |b, j| if row[j] > row[b] { j } else { b });
            data.push(row[best]);
            arg.push(best);
        }
        let value = Tensor::vector(data);
        Ok(self.push(Op::RowMax(x, arg), value))
    }

    /// Selects column `idx[i]` from row `i` of a matrix.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = as_matrix(src, "pick")?;
        if idx.len() != r || idx.iter().any(|&j| j >= c) {
            return Err(Error::shape(format!(
                "pick: {} indices for a {r}x{c} matrix",
                idx.len()
            )));
        }
        let value = Tensor::vector((0..r).map(|i| src.data[i * c + idx[i]]).collect());
        Ok(self.push(Op::Pick(x, idx.to_vec()), value))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::scalar(src.sum() / src.len() as f64);
        self.push(Op::Mean(x), value)
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    ///
    /// Every trainable leaf gets an entry, zero-filled when the loss does not
    /// depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            for (input, contribution) in self.local_grads(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                accumulate(&mut grads[input.0], contribution);
            }
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
            if !matches!(node.op, Op::Leaf) {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let y = &node.value;
        let like = |data: Vec<f64>, v: Var| Tensor {
            shape: self.shape(v).to_vec(),
            data,
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape[0], av.shape[1]);
                let n = if bv.rank() == 2 { bv.shape[1] } else { 1 };
                // dA = G Bᵀ
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g.data[i * n + j] * bv.data[p * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                // dB = Aᵀ G
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = av.data[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += aip * g.data[i * n + j];
                        }
                    }
                }
                vec![(*a, like(ga, *a)), (*b, like(gb, *b))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![
                (*a, g.clone()),
                (*b, like(g.data.iter().map(|x| -x).collect(), *b)),
            ],
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = g.data.iter().zip(&bv.data).map(|(g, y)| g * y).collect();
                let gb = g.data.iter().zip(&av.data).map(|(g, x)| g * x).collect();
                vec![(*a, like(ga, *a)), (*b, like(gb, *b))]
            }
            Op::Scale(a, c) => vec![(*a, like(g.data.iter().map(|x| c * x).collect(), *a))],
            Op::Tanh(a) => {
                let d = g.data.iter().zip(&y.data).map(|(g, y)| g * (1.0 - y * y)).collect();
                vec![(*a, like(d, *a))]
            }
            Op::Sigmoid(a) => {
                let d = g.data.iter().zip(&y.data).map(|(g, y)| g * y * (1.0 - y)).collect();
                vec![(*a, like(d, *a))]
            }
            Op::Softmax(a, axis) => {
                let mut d = vec![0.0; y.len()];
                Lanes::new(y.shape(), *axis).expect("checked in forward").for_each(|idx| {
                    let dot: f64 = idx.clone().map(|i| g.data[i] * y.data[i]).sum();
                    for i in idx {
                        d[i] = y.data[i] * (g.data[i] - dot);
                    }
                });
                vec![(*a, like(d, *a))]
            }
            Op::LogSoftmax(a, axis) => {
                let mut d = vec![0.0; y.len()];
                Lanes::new(y.shape(), *axis).expect("checked in forward").for_each(|idx| {
                    let total: f64 = idx.clone().map(|i| g.data[i]).sum();
                    for i in idx {
                        d[i] = g.data[i] - y.data[i].exp() * total;
                    }
                });
                vec![(*a, like(d, *a))]
            }
            Op::Transpose(a) => {
                // y is c×r, input r×c
                let (c, r) = (y.shape[0], y.shape[1]);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = g.data[j * r + i];
                    }
                }
                vec![(*a, like(d, *a))]
            }
            Op::Reshape(a) => vec![(*a, like(g.data.clone(), *a))],
            Op::Row(a, i) => {
                let w = y.len();
                let mut d = vec![0.0; self.value(*a).len()];
                d[i * w..(i + 1) * w].copy_from_slice(&g.data);
                vec![(*a, like(d, *a))]
            }
            Op::StackRows(rows) => {
                let w = y.shape[1];
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| (*r, like(g.data[i * w..(i + 1) * w].to_vec(), *r)))
                    .collect()
            }
            Op::Concat(parts) => {
                let total = *y.shape.last().expect("nonempty shape");
                let outer = y.len() / total;
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let w = *self.shape(*p).last().expect("nonempty shape");
                    let mut d = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        d.extend_from_slice(&g.data[o * total + offset..o * total + offset + w]);
                    }
                    out.push((*p, like(d, *p)));
                    offset += w;
                }
                out
            }
            Op::RowMax(a, arg) => {
                let c = self.shape(*a)[1];
                let mut d = vec![0.0; self.value(*a).len()];
                for (i, &j) in arg.iter().enumerate() {
                    d[i * c + j] = g.data[i];
                }
                vec![(*a, like(d, *a))]
            }
            Op::Pick(a, idx) => {
                let c = self.shape(*a)[1];
                let mut d = vec![0.0; self.value(*a).len()];
                for (i, &j) in idx.iter().enumerate() {
                    d[i * c + j] = g.data[i];
                }
                vec![(*a, like(d, *a))]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(self.shape(*a), g.data[0]))],
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                vec![(*a, Tensor::full(self.shape(*a), g.data[0] / n))]
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, contribution: Tensor) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.data.iter_mut().zip(&contribution.data) {
                *a += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn as_matrix(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(format!("{what} needs a matrix, got {:?}", t.shape)));
    }
    Ok((t.shape[0], t.shape[1]))
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = as_matrix(a, "matmul")?;
    let (k2, n, out_shape) = match b.rank() {
        1 => (b.shape[0], 1, vec![m]),
        2 => (b.shape[0], b.shape[1], vec![m, b.shape[1]]),
        _ => return Err(Error::shape(format!("matmul rhs has rank {}", b.rank()))),
    };
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in data[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

/// Iterates the 1-d lanes of a row-major tensor along one axis.
struct Lanes {
    outer: usize,
    len: usize,
    inner: usize,
}

impl Lanes {
    fn new(shape: &[usize], axis: usize) -> Result<Self> {
        if axis >= shape.len() {
            return Err(Error::shape(format!("axis {axis} out of range for {shape:?}")));
        }
        Ok(Lanes {
            outer: shape[..axis].iter().product(),
            len: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    fn for_each(&self, mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>)) {
        for o in 0..self.outer {
            for i in 0..self.inner {
                let start = o * self.len * self.inner + i;
                f((start..start + self.len * self.inner).step_by(self.inner));
            }
        }
    }
}

/// Denominator floor for relative errors. Central differences at eps = 1e-5
/// carry roundoff near 1e-11, so gradients below this are judged by absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Maximum relative error between analytic and central-difference gradients.
///
/// `f` builds a scalar loss from the parameter handles it is given. Up to
/// `coords_per_param` coordinates of each parameter are sampled (all of them
/// when the parameter is smaller). The error of one coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor],
    eps: f64,
    coords_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        g.value(loss)
            .item()
            .ok_or_else(|| Error::shape("loss is not a scalar"))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport::default();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("every param has a gradient");
        let n = params[pi].len();
        let coords: Vec<usize> = if n <= coords_per_param {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, coords_per_param).into_vec()
        };
        for c in coords {
            let orig = work[pi].data[c];
            work[pi].data[c] = orig + eps;
            let up = eval(&work)?;
            work[pi].data[c] = orig - eps;
            let down = eval(&work)?;
            work[pi].data[c] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data[c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((pi, c, a, numeric));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// (param index, coordinate, analytic, numeric) of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}
