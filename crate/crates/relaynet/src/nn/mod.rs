//! Dense-tensor math, small MLPs with manual reverse-mode differentiation,
//! and an adaptive first-order optimizer. Everything downstream (policies,
//! value networks, initial-state optimization) is built on this module.

mod adam;
mod mlp;
mod tensor;

pub use adam::AdamState;
pub use mlp::{ForwardTrace, InitScheme, MlpGrads, MlpParams};
pub use tensor::Tensor;
