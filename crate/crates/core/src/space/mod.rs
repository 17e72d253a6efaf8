//! Layer-wise operator menu, architecture encodings, architecture
//! parameters with Gumbel-softmax sampling, and the weight-sharing supernet.

mod arch;
mod operator;
mod params;
mod supernet;

pub use arch::{encode, Architecture, ArchitectureDoc, LayerDoc, SpaceDoc};
pub use operator::{Activation, ArchSpace, OpKind, OperatorSpec};
pub use params::{
    gumbel_noise, relaxed_sample, ArchParams, GumbelSample, NoiseTarget, RelaxedSample,
};
pub use supernet::{Binding, ForwardPass, ForwardStats, Route, Supernet};
