//! Hardware-constrained differentiable architecture search.
//!
//! A single-path Gumbel-softmax supernet is searched jointly with a learned
//! trade-off multiplier so that the chosen network meets a latency (or
//! energy) target in one run.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod hardware;
pub mod optim;
pub mod scalar;
pub mod search;
pub mod space;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type Graph = autodiff::Graph<f64>;
pub type ArchParams = space::ArchParams<f64>;
pub type Supernet = space::Supernet<f64>;
