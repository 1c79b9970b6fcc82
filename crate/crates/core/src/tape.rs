//! Reverse-mode differentiation over the kernels in [`crate::ops`].
//!
//! A [`Tape`] records each operator application as a node holding its
//! output value and whatever the adjoint needs. Nodes are appended in
//! execution order, so walking them backwards is a valid reverse topological
//! order. One tape belongs to one forward/backward pass on one thread;
//! independent tapes may run concurrently.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::ops::{self, LayerNormCache};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Linear,
    Conv2d,
    DwConv2d,
    LayerNorm,
    Softmax,
    Gelu,
    AvgPool,
    Reshape,
    Permute,
    Add,
    Sub,
    Mul,
    Scale,
    Concat,
    Narrow,
    Sum,
    CrossEntropy,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize },
    DwConv2d { x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, cache: LayerNormCache },
    Softmax(Var),
    Gelu(Var),
    AvgPool(Var),
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    Sum(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Linear { .. } => OpKind::Linear,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::DwConv2d { .. } => OpKind::DwConv2d,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Gelu(_) => OpKind::Gelu,
            Op::AvgPool(_) => OpKind::AvgPool,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Concat { .. } => OpKind::Concat,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::Sum(_) => OpKind::Sum,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Linear { x, w, b } | Op::Conv2d { x, w, b, .. } | Op::DwConv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Softmax(x) | Op::Gelu(x) | Op::AvgPool(x) | Op::Reshape(x) | Op::Scale(x, _) | Op::Sum(x) => vec![*x],
            Op::Permute { x, .. } | Op::Narrow { x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    name: Option<String>,
}

/// Deliberate adjoint corruption used as a negative control for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointFault {
    pub kind: OpKind,
    pub factor: f64,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<AdjointFault>,
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_leaf: IndexMap<Var, Tensor>,
    names: IndexMap<String, Var>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.by_leaf.get(&var)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.get(name).and_then(|v| self.by_leaf.get(v))
    }

    /// Named leaves in registration order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|(n, v)| (n.as_str(), &self.by_leaf[v]))
    }

    pub fn into_named(self) -> IndexMap<String, Tensor> {
        let Gradients { mut by_leaf, names } = self;
        names
            .into_iter()
            .map(|(n, v)| {
                let g = by_leaf.swap_remove(&v).expect("named leaf has a gradient");
                (n, g)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scales every adjoint flowing into nodes of `fault.kind`.
    pub fn with_fault(mut self, fault: AdjointFault) -> Self {
        self.fault = Some(fault);
        self
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            name: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; it is differentiated iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            requires_grad,
            name: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Records a named trainable leaf.
    pub fn param(&mut self, name: impl Into<String>, tensor: Tensor) -> Var {
        let v = self.leaf(tensor.with_requires_grad(true));
        self.nodes[v.0].name = Some(name.into());
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, padding)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, stride, padding }))
    }

    pub fn dwconv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let out = ops::dwconv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, padding)?;
        Ok(self.push(out, Op::DwConv2d { x, w, b, stride, padding }))
    }

    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (out, cache) = ops::layernorm(self.value(x), self.value(gamma), self.value(beta), ops::LAYERNORM_EPS)?;
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, cache }))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = ops::softmax(self.value(x));
        self.push(out, Op::Softmax(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = ops::gelu(self.value(x));
        self.push(out, Op::Gelu(x))
    }

    pub fn avgpool_global(&mut self, x: Var) -> Result<Var> {
        let out = ops::avgpool_global(self.value(x))?;
        Ok(self.push(out, Op::AvgPool(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let out = ops::permute(self.value(x), perm)?;
        Ok(self.push(out, Op::Permute { x, perm: perm.to_vec() }))
    }

    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var> {
        let mut perm: Vec<usize> = (0..self.value(x).rank()).collect();
        if a >= perm.len() || b >= perm.len() {
            return Err(Error::shape("transpose", format!("axes ({a}, {b}) out of range for {:?}", self.shape(x))));
        }
        perm.swap(a, b);
        self.permute(x, &perm)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = ops::scale(self.value(x), s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat(&tensors, axis)?;
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }))
    }

    pub fn concat_last_axis(&mut self, parts: &[Var]) -> Result<Var> {
        let axis = parts.first().map(|&p| self.value(p).rank().saturating_sub(1)).unwrap_or(0);
        self.concat(parts, axis)
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = ops::narrow(self.value(x), axis, start, len)?;
        Ok(self.push(out, Op::Narrow { x, axis, start }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Mean softmax cross-entropy; returns a scalar.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Back-propagates from a scalar `loss` to every `requires_grad` leaf.
    ///
    /// Leaves the loss does not depend on receive zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(root.value.shape()));
        let mut by_leaf = IndexMap::new();
        let mut names = IndexMap::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(mut g) = grads[idx].take() else {
                if matches!(node.op, Op::Leaf) {
                    by_leaf.insert(Var(idx), Tensor::zeros(node.value.shape()));
                }
                continue;
            };
            if let Some(fault) = self.fault {
                if fault.kind == node.op.kind() {
                    g = ops::scale(&g, fault.factor);
                }
            }
            if matches!(node.op, Op::Leaf) {
                by_leaf.insert(Var(idx), g);
                continue;
            }
            for (input, adj) in self.adjoints(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                let slot = &mut grads[input.0];
                *slot = Some(match slot.take() {
                    Some(acc) => ops::add(&acc, &adj)?,
                    None => adj,
                });
            }
        }
        // leaves recorded after the loss, or never reached
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                by_leaf.entry(Var(idx)).or_insert_with(|| Tensor::zeros(node.value.shape()));
                if let Some(name) = &node.name {
                    names.insert(name.clone(), Var(idx));
                }
            }
        }
        by_leaf.sort_by(|a, _, b, _| a.0.cmp(&b.0));
        Ok(Gradients { by_leaf, names })
    }

    fn adjoints(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ga, gb) = ops::matmul_backward(val(*a), val(*b), g);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Linear { x, w, b } => {
                let (gx, gw, gb) = ops::linear_backward(val(*x), val(*w), g);
                let mut out = vec![(*x, gx), (*w, gw)];
                out.extend(b.map(|b| (b, gb)));
                out
            }
            Op::Conv2d { x, w, b, stride, padding } => {
                let (gx, gw, gb) = ops::conv2d_backward(val(*x), val(*w), g, *stride, *padding);
                let mut out = vec![(*x, gx), (*w, gw)];
                out.extend(b.map(|b| (b, gb)));
                out
            }
            Op::DwConv2d { x, w, b, stride, padding } => {
                let (gx, gw, gb) = ops::dwconv2d_backward(val(*x), val(*w), g, *stride, *padding);
                let mut out = vec![(*x, gx), (*w, gw)];
                out.extend(b.map(|b| (b, gb)));
                out
            }
            Op::LayerNorm { x, gamma, beta, cache } => {
                let (gx, gg, gb) = ops::layernorm_backward(cache, val(*gamma), g);
                vec![(*x, gx), (*gamma, gg), (*beta, gb)]
            }
            Op::Softmax(x) => vec![(*x, ops::softmax_backward(&node.value, g))],
            Op::Gelu(x) => vec![(*x, ops::gelu_backward(val(*x), g))],
            Op::AvgPool(x) => vec![(*x, ops::avgpool_global_backward(val(*x).shape(), g))],
            Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape()).expect("same element count"))],
            Op::Permute { x, perm } => {
                let inv = ops::inverse_permutation(perm);
                vec![(*x, ops::permute(g, &inv).expect("valid permutation"))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, ops::scale(g, -1.0))],
            Op::Mul(a, b) => vec![
                (*a, ops::mul(g, val(*b)).expect("same shape")),
                (*b, ops::mul(g, val(*a)).expect("same shape")),
            ],
            Op::Scale(x, s) => vec![(*x, ops::scale(g, *s))],
            Op::Concat { parts, axis } => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let len = val(p).shape()[*axis];
                        let piece = ops::narrow(g, *axis, start, len).expect("in range");
                        start += len;
                        (p, piece)
                    })
                    .collect()
            }
            Op::Narrow { x, axis, start } => vec![(*x, ops::narrow_backward(val(*x).shape(), *axis, *start, g))],
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.data()[0]))],
            Op::CrossEntropy { logits, labels, probs } => {
                vec![(*logits, ops::cross_entropy_backward(probs, labels, g.data()[0]))]
            }
        }
    }
}
