//! Minimal reverse-mode differentiation for the generator networks.
//!
//! Supports exactly what the spatial and temporal generators need: same-padded
//! stride-1 convolutions (2-D and 1-D), ReLU, per-channel bias and scalar
//! linear combinations. The ReLU derivative at exactly zero is taken as 0.

mod graph;
mod kernels;
mod tensor;

pub use graph::{Adjoints, Graph, NodeId, OpKind};
pub use kernels::{conv1d, conv2d, relu};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
