//! Minimal dense-tensor core: NCHW tensors, a reverse-mode computation tape
//! and an Adam optimizer.
//!
//! Storage is generic over [`Scalar`] so that the same graph code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod adam;
mod gemm;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gemm::Scalar;
pub use tape::{backward, Gradients, NodeId, Tape};
pub use tensor::{softplus, Tensor};
