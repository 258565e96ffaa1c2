//! Reverse-mode tape over the layer primitives.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and backward is a single reverse sweep.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Conv2d,
    Conv1d,
    Relu,
    AddBias,
    LinearCombine,
}

enum Op<T> {
    Input,
    Conv {
        kind: OpKind,
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    Relu {
        input: NodeId,
    },
    AddBias {
        input: NodeId,
        bias: NodeId,
    },
    LinearCombine {
        coeffs: NodeId,
        inputs: Vec<NodeId>,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Computation graph with eagerly cached forward values.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::shape("graph", format!("unknown node {}", id.0)));
        }
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        match &self.nodes[id.0].op {
            Op::Input => OpKind::Input,
            Op::Conv { kind, .. } => *kind,
            Op::Relu { .. } => OpKind::Relu,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::LinearCombine { .. } => OpKind::LinearCombine,
        }
    }

    /// Leaf node (data, parameter or latent input).
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn conv2d(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        self.conv(OpKind::Conv2d, input, weights, bias)
    }

    pub fn conv1d(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        self.conv(OpKind::Conv1d, input, weights, bias)
    }

    fn conv(&mut self, kind: OpKind, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        for id in [input, weights, bias] {
            self.check(id)?;
        }
        let (x, w, b) = (self.value(input), self.value(weights), self.value(bias));
        let geom = match kind {
            OpKind::Conv2d => ConvGeom::for_conv2d(x, w, b)?,
            _ => ConvGeom::for_conv1d(x, w, b)?,
        };
        let cols = kernels::im2col(x.data(), &geom);
        let out = kernels::conv_forward_cols(&cols, w.data(), b.data(), &geom);
        let shape = match kind {
            OpKind::Conv2d => vec![geom.c_out, geom.height, geom.width],
            _ => vec![geom.c_out, geom.width],
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::Conv {
                kind,
                input,
                weights,
                bias,
                geom,
                cols,
            },
            value,
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        let value = kernels::relu(self.value(input));
        Ok(self.push(Op::Relu { input }, value))
    }

    /// Adds `bias[c]` to every entry of channel `c` of a `[C, ...]` tensor.
    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check(input)?;
        self.check(bias)?;
        let (x, b) = (self.value(input), self.value(bias));
        if b.shape().len() != 1 || x.shape().first() != Some(&b.shape()[0]) {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} does not match leading axis of {:?}", b.shape(), x.shape()),
            ));
        }
        let per = x.len() / b.shape()[0].max(1);
        let mut value = x.clone();
        for (c, chunk) in value.data_mut().chunks_mut(per.max(1)).enumerate() {
            let bc = b.data()[c];
            chunk.iter_mut().for_each(|v| *v = *v + bc);
        }
        Ok(self.push(Op::AddBias { input, bias }, value))
    }

    /// `Σ_k coeffs[k] · inputs[k]`, all inputs of one shape, `coeffs` of shape `[K]`.
    pub fn linear_combine(&mut self, coeffs: NodeId, inputs: &[NodeId]) -> Result<NodeId> {
        self.check(coeffs)?;
        for &id in inputs {
            self.check(id)?;
        }
        let a = self.value(coeffs);
        if a.shape() != [inputs.len()] {
            return Err(Error::shape(
                "linear_combine",
                format!("{} inputs but coefficient shape {:?}", inputs.len(), a.shape()),
            ));
        }
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("linear_combine", "no inputs"))?;
        let mut value = Tensor::zeros(self.value(*first).shape());
        for (k, &id) in inputs.iter().enumerate() {
            value.axpy(a.data()[k], self.value(id))?;
        }
        Ok(self.push(
            Op::LinearCombine {
                coeffs,
                inputs: inputs.to_vec(),
            },
            value,
        ))
    }

    /// Reverse sweep from `output` seeded with `seed`.
    pub fn backward(&self, output: NodeId, seed: &Tensor<T>) -> Result<Adjoints<T>> {
        self.check(output)?;
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed {:?} does not match output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Conv {
                    input,
                    weights,
                    bias,
                    geom,
                    cols,
                    ..
                } => {
                    let w = self.value(*weights);
                    let grads = kernels::conv_backward(g.data(), cols, w.data(), geom);
                    accumulate(&mut adj, *input, self.value(*input).shape(), grads.input);
                    accumulate(&mut adj, *weights, w.shape(), grads.weights);
                    accumulate(&mut adj, *bias, self.value(*bias).shape(), grads.bias);
                }
                Op::Relu { input } => {
                    let x = self.value(*input);
                    let gx = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut adj, *input, x.shape(), gx);
                }
                Op::AddBias { input, bias } => {
                    let nb = self.value(*bias).len();
                    let per = g.len() / nb.max(1);
                    let gb = g
                        .data()
                        .chunks(per.max(1))
                        .map(|c| c.iter().fold(T::zero(), |a, &b| a + b))
                        .collect();
                    accumulate(&mut adj, *bias, self.value(*bias).shape(), gb);
                    accumulate(&mut adj, *input, g.shape(), g.data().to_vec());
                }
                Op::LinearCombine { coeffs, inputs } => {
                    let a = self.value(*coeffs).data().to_vec();
                    let mut ga = Vec::with_capacity(inputs.len());
                    for (k, &id) in inputs.iter().enumerate() {
                        ga.push(g.dot(self.value(id))?);
                        let gx = g.data().iter().map(|&v| v * a[k]).collect();
                        accumulate(&mut adj, id, g.shape(), gx);
                    }
                    accumulate(&mut adj, *coeffs, &[inputs.len()], ga);
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Adjoints { grads: adj })
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Tensor<T>>], id: NodeId, shape: &[usize], delta: Vec<T>) {
    match &mut adj[id.0] {
        Some(t) => {
            for (a, d) in t.data_mut().iter_mut().zip(delta) {
                *a = *a + d;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), delta).expect("adjoint sized like forward value"));
        }
    }
}

/// Adjoints produced by [`Graph::backward`].
pub struct Adjoints<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Adjoints<T> {
    /// Adjoint of `id`, or `None` when the node does not influence the output.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Adjoint of `id`, zero-filled when the node does not influence the output.
    pub fn take_or_zeros(&mut self, graph: &Graph<T>, id: NodeId) -> Tensor<T> {
        self.grads
            .get_mut(id.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(graph.value(id).shape()))
    }
}
