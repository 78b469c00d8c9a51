//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in execution order, so the node list is already a
//! topological order and `backward` simply walks it in reverse.

use super::conv::{conv2d_backward, conv2d_forward};
use super::tensor::concat_channels;
use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        input: NodeId,
        start: usize,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    FrobeniusSq(NodeId, NodeId),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    value: Tensor<T>,
    /// 64-bit accumulation of scalar reductions.
    exact: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor<T>, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { op, value, exact: None });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a node, from the 64-bit accumulator when the node is a reduction.
    pub fn scalar_f64(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id.0];
        node.exact.unwrap_or_else(|| node.value.data()[0].as_f64())
    }

    /// A constant (non-parameter) input. Gradients still flow to it.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(Op::Leaf, value, "leaf")
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: store.get(id).clone(),
            exact: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let out = conv2d_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            out,
            "conv2d",
        )
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let out = self.value(input).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu(input), out, "relu")
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = concat_channels(&values)?;
        self.push(Op::Concat(parts.to_vec()), out, "concat")
    }

    pub fn slice_channels(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let out = self.value(input).slice_channels(start, len)?;
        self.push(Op::Slice { input, start }, out, "slice_channels")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let exact = self.nodes[a.0].exact.zip(self.nodes[b.0].exact).map(|(x, y)| x + y);
        let id = self.push(Op::Add(a, b), out, "add")?;
        self.nodes[id.0].exact = exact;
        Ok(id)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), out, "sub")
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let f = T::from_f64(factor);
        let exact = self.nodes[a.0].exact.map(|e| e * factor);
        let out = self.value(a).map(|v| v * f);
        let id = self.push(Op::Scale(a, factor), out, "scale")?;
        self.nodes[id.0].exact = exact;
        Ok(id)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let acc: f64 = self.value(a).data().iter().map(|v| v.as_f64()).sum();
        let id = self.push(Op::Sum(a), Tensor::scalar(T::from_f64(acc)), "sum")?;
        self.nodes[id.0].exact = Some(acc);
        Ok(id)
    }

    /// `sum((a - b)^2) / batch`.
    pub fn frobenius_sq(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let acc = frobenius_sq(self.value(a), self.value(b))?;
        let id = self.push(Op::FrobeniusSq(a, b), Tensor::scalar(T::from_f64(acc)), "frobenius_sq")?;
        self.nodes[id.0].exact = Some(acc);
        Ok(id)
    }

    /// Reverse-mode pass from a scalar `loss`. Nodes not upstream of the
    /// loss get no gradient; parameters among them read back as zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_dims = self.value(loss).dims();
        if loss_dims != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(loss_dims.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                } => {
                    let cg = conv2d_backward(self.value(*input), self.value(*weight), &g, *stride, *pad)?;
                    accumulate(&mut grads, *input, cg.input);
                    accumulate(&mut grads, *weight, cg.weight);
                    if let Some(b) = bias {
                        let dims = self.value(*b).dims();
                        accumulate(&mut grads, *b, Tensor::from_vec(dims, cg.bias)?);
                    }
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let d = g.zip_map(x, "relu backward", |gv, xv| if xv > T::zero() { gv } else { T::zero() })?;
                    accumulate(&mut grads, *input, d);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = self.value(p).channels();
                        accumulate(&mut grads, p, g.slice_channels(start, len)?);
                        start += len;
                    }
                }
                Op::Slice { input, start } => {
                    let src = self.value(*input);
                    let mut d = Tensor::zeros(src.dims());
                    let plane = src.plane_len();
                    let len = g.channels();
                    for b in 0..src.batch() {
                        let dst = &mut d.item_mut(b)[start * plane..(start + len) * plane];
                        dst.copy_from_slice(g.item(b));
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, factor) => {
                    let f = T::from_f64(*factor);
                    accumulate(&mut grads, *a, g.map(|v| v * f));
                }
                Op::Sum(a) => {
                    let dims = self.value(*a).dims();
                    accumulate(&mut grads, *a, Tensor::full(dims, g.data()[0]));
                }
                Op::FrobeniusSq(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let coef = g.data()[0] * T::from_f64(2.0 / va.batch() as f64);
                    let da = va.zip_map(vb, "frobenius_sq backward", |x, y| coef * (x - y))?;
                    accumulate(&mut grads, *b, da.map(|v| -v));
                    accumulate(&mut grads, *a, da);
                }
            }
            if let Some(g) = &grads[i] {
                if !g.is_finite() {
                    return Err(Error::NonFinite("backward"));
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(pid) => Some((pid, NodeId(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Σ(a−b)² averaged over the batch axis, accumulated in 64-bit.
pub fn frobenius_sq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.expect_dims("frobenius_sq", b.dims())?;
    let n = a.batch().max(1) as f64;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(s / n)
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, NodeId)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. a leaf or parameter node, if it was reached.
    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// One gradient per parameter in `store` order; zeros where the
    /// parameter did not influence the loss. A parameter bound into the
    /// graph more than once receives the sum.
    pub fn for_params(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store.values().iter().map(|v| Tensor::zeros(v.dims())).collect();
        for &(pid, nid) in &self.params {
            if let Some(g) = self.node(nid) {
                out[pid.0].add_assign(g);
            }
        }
        out
    }
}
