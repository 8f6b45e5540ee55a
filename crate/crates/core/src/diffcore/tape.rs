//! Dynamic reverse-mode tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and enough context to run its backward rule.
//! [`Tape::backward`] walks the nodes in reverse and adds the resulting
//! gradients into every leaf that requires them; calling it twice adds twice.
//! Dropping the tape frees the graph.

use std::collections::HashMap;

use super::param::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Sigmoid,
    Tanh,
    Log,
    Exp,
    Neg,
}

/// Binary elementwise operations. Operands broadcast numpy-style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean cross-entropy of row-wise logits against class indices.
    CrossEntropy,
    /// Mean squared error against a same-shape target.
    MeanSquaredError,
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Unary(UnaryKind, Var),
    Binary(BinaryKind, Var, Var),
    MatMul(Var, Var),
    Scale(Var, S),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    Sum(Var),
    Mean(Var),
    SumAxis { x: Var, axis: usize },
    SelectColumns { x: Var, cols: Vec<usize> },
    StraightThrough { soft: Var },
    CrossEntropy { logits: Var, targets: Vec<usize> },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    params: HashMap<ParamId, Var>,
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| {
        let off = rank - s.len();
        if i < off {
            1
        } else {
            s[i - off]
        }
    };
    (0..rank)
        .map(|i| {
            let (x, y) = (pad(a, i), pad(b, i));
            match (x, y) {
                _ if x == y => Some(x),
                (1, _) => Some(y),
                (_, 1) => Some(x),
                _ => None,
            }
        })
        .collect()
}

/// Strides of `src` laid against `out`, with 0 on broadcast dimensions.
fn broadcast_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let off = out.len() - src.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + off] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    strides
}

/// Source offsets of `a` and `b` for every element of the broadcast output.
fn broadcast_offsets(a: &[usize], b: &[usize], out: &[usize]) -> Vec<(usize, usize)> {
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let n = numel(out);
    let mut idx = vec![0usize; out.len()];
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        let oa = idx.iter().zip(&sa).map(|(i, s)| i * s).sum();
        let ob = idx.iter().zip(&sb).map(|(i, s)| i * s).sum();
        offsets.push((oa, ob));
        for d in (0..out.len()).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    offsets
}

/// (outer, len, inner) decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

fn softmax_forward<S: Scalar>(x: &[S], shape: &[usize], axis: usize, log: bool) -> Vec<S> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![S::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| o * len * inner + k * inner + i;
            let max = (0..len).map(|k| x[at(k)]).fold(S::neg_infinity(), S::max);
            let denom: S = (0..len).map(|k| (x[at(k)] - max).exp()).sum();
            for k in 0..len {
                out[at(k)] = if log {
                    x[at(k)] - max - denom.ln()
                } else {
                    (x[at(k)] - max).exp() / denom
                };
            }
        }
    }
    out
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<S>, shape: Vec<usize>, values: Vec<S>, name: &'static str) -> Result<Var> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = self.op_parents(&op).iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, values),
            op,
            needs_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn op_parents(&self, op: &Op<S>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Unary(_, x)
            | Op::Scale(x, _)
            | Op::Softmax { x, .. }
            | Op::LogSoftmax { x, .. }
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumAxis { x, .. }
            | Op::SelectColumns { x, .. }
            | Op::StraightThrough { soft: x }
            | Op::CrossEntropy { logits: x, .. } => vec![*x],
            Op::Binary(_, a, b) | Op::MatMul(a, b) | Op::Mse { pred: a, target: b } => vec![*a, *b],
        }
    }

    /// Records a leaf. It participates in gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        let needs_grad = t.requires_grad();
        let mut value = t;
        value.zero_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, mut t: Tensor<S>) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// Binds a stored parameter as a leaf. Repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let t = store.get(id);
        let var = self.leaf(Tensor::from_parts(t.shape().to_vec(), t.values().to_vec()));
        let node = &mut self.nodes[var.0];
        node.needs_grad = t.requires_grad();
        node.value.set_requires_grad(t.requires_grad());
        node.param = Some(id);
        self.params.insert(id, var);
        var
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad()
    }

    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Result<Var> {
        let xv = self.value(x).values();
        let out: Vec<S> = match kind {
            UnaryKind::Relu => xv.iter().map(|&v| v.max(S::zero())).collect(),
            UnaryKind::Sigmoid => xv.iter().map(|&v| sigmoid(v)).collect(),
            UnaryKind::Tanh => xv.iter().map(|v| v.tanh()).collect(),
            UnaryKind::Exp => xv.iter().map(|v| v.exp()).collect(),
            UnaryKind::Neg => xv.iter().map(|&v| -v).collect(),
            UnaryKind::Log => {
                if let Some(bad) = xv.iter().find(|&&v| v <= S::zero()) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive input {bad}"),
                    });
                }
                xv.iter().map(|v| v.ln()).collect()
            }
        };
        let shape = self.shape(x).to_vec();
        let name = match kind {
            UnaryKind::Relu => "relu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Log => "log",
            UnaryKind::Exp => "exp",
            UnaryKind::Neg => "neg",
        };
        self.push(Op::Unary(kind, x), shape, out, name)
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| Error::Dimension {
            op: "elementwise",
            left: sa.clone(),
            right: sb.clone(),
        })?;
        let (av, bv) = (self.value(a).values(), self.value(b).values());
        let f = |x: S, y: S| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => x / y,
        };
        let out: Vec<S> = if sa == sb {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else {
            broadcast_offsets(&sa, &sb, &out_shape)
                .into_iter()
                .map(|(i, j)| f(av[i], bv[j]))
                .collect()
        };
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        self.push(Op::Binary(kind, a, b), out_shape, out, name)
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

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Log, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn scale(&mut self, x: Var, c: S) -> Result<Var> {
        let out = self.value(x).values().iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Scale(x, c), shape, out, "scale")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).values(), self.value(b).values(), m, k, n);
        self.push(Op::MatMul(a, b), vec![m, n], out, "matmul")
    }

    fn check_axis(&self, x: Var, axis: usize) -> Result<()> {
        let shape = self.shape(x);
        if axis >= shape.len() {
            return Err(Error::Shape(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        Ok(())
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let out = softmax_forward(self.value(x).values(), &shape, axis, false);
        self.push(Op::Softmax { x, axis }, shape, out, "softmax")
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let out = softmax_forward(self.value(x).values(), &shape, axis, true);
        self.push(Op::LogSoftmax { x, axis }, shape, out, "log_softmax")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).values().iter().copied().sum();
        self.push(Op::Sum(x), vec![], vec![s], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).values();
        if v.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let m = v.iter().copied().sum::<S>() / S::of(v.len() as f64);
        self.push(Op::Mean(x), vec![], vec![m], "mean")
    }

    /// Sum along `axis`, keeping it as a size-1 dimension.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = axis_split(&shape, axis);
        let xv = self.value(x).values();
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + xv[o * len * inner + k * inner + i];
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        self.push(Op::SumAxis { x, axis }, out_shape, out, "sum_axis")
    }

    /// Columns `cols` of a rank-2 tensor, in the given order.
    pub fn select_columns(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::Shape(format!(
                "select_columns needs rank 2, got {shape:?}"
            )));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= shape[1]) {
            return Err(Error::Index(format!(
                "column {c} out of range for shape {shape:?}"
            )));
        }
        let xv = self.value(x).values();
        let (rows, width) = (shape[0], shape[1]);
        let out = (0..rows)
            .flat_map(|r| cols.iter().map(move |&c| xv[r * width + c]))
            .collect();
        self.push(
            Op::SelectColumns {
                x,
                cols: cols.to_vec(),
            },
            vec![rows, cols.len()],
            out,
            "select_columns",
        )
    }

    /// Forward value `hard`, backward gradient routed unchanged to `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor<S>) -> Result<Var> {
        if hard.shape() != self.shape(soft) {
            return Err(Error::Dimension {
                op: "straight_through",
                left: self.shape(soft).to_vec(),
                right: hard.shape().to_vec(),
            });
        }
        let shape = hard.shape().to_vec();
        let values = hard.values().to_vec();
        self.push(Op::StraightThrough { soft }, shape, values, "straight_through")
    }

    /// Mean cross-entropy between `[batch, classes]` logits and class indices,
    /// computed in log-sum-exp form.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() || shape[0] == 0 {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: shape,
                right: vec![targets.len()],
            });
        }
        let classes = shape[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Index(format!(
                "class index {t} out of range for {classes} classes"
            )));
        }
        let logp = softmax_forward(self.value(logits).values(), &shape, 1, true);
        let total: S = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -logp[r * classes + t])
            .sum();
        let loss = total / S::of(targets.len() as f64);
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            vec![],
            vec![loss.max(S::zero())],
            "cross_entropy",
        )
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred).to_vec(), self.shape(target).to_vec());
        if sp != st {
            return Err(Error::Dimension {
                op: "mse",
                left: sp,
                right: st,
            });
        }
        let (p, t) = (self.value(pred).values(), self.value(target).values());
        if p.is_empty() {
            return Err(Error::Shape("mse of empty tensors".into()));
        }
        let m = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>() / S::of(p.len() as f64);
        self.push(Op::Mse { pred, target }, vec![], vec![m], "mse")
    }

    pub fn loss(&mut self, kind: LossKind, prediction: Var, target: LossTarget<'_, S>) -> Result<Var> {
        match (kind, target) {
            (LossKind::CrossEntropy, LossTarget::Classes(t)) => self.cross_entropy(prediction, t),
            (LossKind::MeanSquaredError, LossTarget::Values(t)) => {
                let t = self.constant(t.clone());
                self.mse(prediction, t)
            }
            (k, _) => Err(Error::Parameter(format!(
                "loss {k:?} given an incompatible target kind"
            ))),
        }
    }

    /// Reverse pass from a single-element node. Gradients are added into
    /// every leaf that requires them.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a single-element output, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut adj: Vec<Option<Vec<S>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![S::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { op: "backward" });
                }
                self.nodes[i].value.accumulate_grad(&g)?;
                continue;
            }
            for (parent, contrib) in self.local_grads(i, &g) {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a = *a + *c),
                    slot => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `i` to each of its parents.
    fn local_grads(&self, i: usize, g: &[S]) -> Vec<(Var, Vec<S>)> {
        let node = &self.nodes[i];
        let y = node.value.values();
        let val = |v: Var| self.nodes[v.0].value.values();
        let shp = |v: Var| self.nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => vec![],
            Op::Unary(kind, x) => {
                let xv = val(*x);
                let d: Vec<S> = match kind {
                    UnaryKind::Relu => g
                        .iter()
                        .zip(xv)
                        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                        .collect(),
                    UnaryKind::Sigmoid => g.iter().zip(y).map(|(&g, &s)| g * s * (S::one() - s)).collect(),
                    UnaryKind::Tanh => g.iter().zip(y).map(|(&g, &t)| g * (S::one() - t * t)).collect(),
                    UnaryKind::Log => g.iter().zip(xv).map(|(&g, &x)| g / x).collect(),
                    UnaryKind::Exp => g.iter().zip(y).map(|(&g, &e)| g * e).collect(),
                    UnaryKind::Neg => g.iter().map(|&g| -g).collect(),
                };
                vec![(*x, d)]
            }
            Op::Binary(kind, a, b) => {
                let (sa, sb) = (shp(*a), shp(*b));
                let (av, bv) = (val(*a), val(*b));
                let mut ga = vec![S::zero(); av.len()];
                let mut gb = vec![S::zero(); bv.len()];
                let offsets: Vec<(usize, usize)> = if sa == sb {
                    (0..g.len()).map(|k| (k, k)).collect()
                } else {
                    broadcast_offsets(sa, sb, node.value.shape())
                };
                for (k, (ia, ib)) in offsets.into_iter().enumerate() {
                    let (x, w) = (av[ia], bv[ib]);
                    let (da, db) = match kind {
                        BinaryKind::Add => (g[k], g[k]),
                        BinaryKind::Sub => (g[k], -g[k]),
                        BinaryKind::Mul => (g[k] * w, g[k] * x),
                        BinaryKind::Div => (g[k] / w, -g[k] * x / (w * w)),
                    };
                    ga[ia] = ga[ia] + da;
                    gb[ib] = gb[ib] + db;
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::MatMul(a, b) => {
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[1];
                let (av, bv) = (val(*a), val(*b));
                let mut ga = vec![S::zero(); m * k];
                let mut gb = vec![S::zero(); k * n];
                for r in 0..m {
                    for c in 0..n {
                        let gv = g[r * n + c];
                        if gv == S::zero() {
                            continue;
                        }
                        for j in 0..k {
                            ga[r * k + j] = ga[r * k + j] + gv * bv[j * n + c];
                            gb[j * n + c] = gb[j * n + c] + gv * av[r * k + j];
                        }
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, c) => vec![(*x, g.iter().map(|&v| v * *c).collect())],
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                let mut d = vec![S::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| o * len * inner + k * inner + i;
                        let dot: S = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                        for k in 0..len {
                            d[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::LogSoftmax { x, axis } => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                let mut d = vec![S::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| o * len * inner + k * inner + i;
                        let total: S = (0..len).map(|k| g[at(k)]).sum();
                        for k in 0..len {
                            d[at(k)] = g[at(k)] - y[at(k)].exp() * total;
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
            Op::Mean(x) => {
                let n = val(*x).len();
                vec![(*x, vec![g[0] / S::of(n as f64); n])]
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = axis_split(shp(*x), *axis);
                let mut d = vec![S::zero(); outer * len * inner];
                for o in 0..outer {
                    for k in 0..len {
                        for i in 0..inner {
                            d[o * len * inner + k * inner + i] = g[o * inner + i];
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::SelectColumns { x, cols } => {
                let width = shp(*x)[1];
                let mut d = vec![S::zero(); val(*x).len()];
                for (r, chunk) in g.chunks(cols.len().max(1)).enumerate() {
                    for (&c, &gv) in cols.iter().zip(chunk) {
                        d[r * width + c] = d[r * width + c] + gv;
                    }
                }
                vec![(*x, d)]
            }
            Op::StraightThrough { soft } => vec![(*soft, g.to_vec())],
            Op::CrossEntropy { logits, targets } => {
                let shape = shp(*logits);
                let classes = shape[1];
                let mut d = softmax_forward(val(*logits), shape, 1, false);
                let scale = g[0] / S::of(targets.len() as f64);
                for (r, &t) in targets.iter().enumerate() {
                    d[r * classes + t] = d[r * classes + t] - S::one();
                }
                d.iter_mut().for_each(|v| *v = *v * scale);
                vec![(*logits, d)]
            }
            Op::Mse { pred, target } => {
                let (p, t) = (val(*pred), val(*target));
                let scale = S::of(2.0) * g[0] / S::of(p.len() as f64);
                let dp: Vec<S> = p.iter().zip(t).map(|(&a, &b)| (a - b) * scale).collect();
                let dt = dp.iter().map(|&v| -v).collect();
                vec![(*pred, dp), (*target, dt)]
            }
        }
    }

    /// Moves gradients accumulated on parameter leaves into `store`, adding to
    /// whatever the store already holds. Leaves are left without gradients.
    pub fn drain_param_grads(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        for node in &mut self.nodes {
            if let (Some(id), Some(g)) = (node.param, node.value.grad()) {
                store.get_mut(id).accumulate_grad(g)?;
                node.value.zero_grad();
            }
        }
        Ok(())
    }
}

/// Target argument of [`Tape::loss`].
#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a, S> {
    Classes(&'a [usize]),
    Values(&'a Tensor<S>),
}

pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for r in 0..m {
        for j in 0..k {
            let av = a[r * k + j];
            if av == S::zero() {
                continue;
            }
            let row = &b[j * n..(j + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (o, &bv) in dst.iter_mut().zip(row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}
