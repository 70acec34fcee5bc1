//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Gradients flow to any leaf marked `requires_grad`, which is how the
//! distillation loop differentiates a loss with respect to network inputs
//! (the synthetic signals) rather than network parameters.

mod graph;
mod kernels;
mod tensor;

pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
