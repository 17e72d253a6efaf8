//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is rebuilt for every evaluation: leaves are created with
//! [`Graph::param`] or [`Graph::constant`], operations append nodes, and
//! [`Graph::backward`] fills gradients for every node that depends on a
//! parameter. Broadcasting is limited to scalar-with-tensor, plus the
//! explicit row bias of [`Graph::add_bias`].

mod check;
mod graph;
mod tensor;

pub use check::{grad_check, relu_margin};
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
