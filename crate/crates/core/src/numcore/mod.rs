//! Dense tensors, reverse-mode differentiation and the convolution
//! primitives the forecasting models are built from.

mod adam;
mod kernels;
pub mod mem;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use kernels::{Conv1dOpts, Padding1d, Padding2d};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
