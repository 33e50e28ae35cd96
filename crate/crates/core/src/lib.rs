//! Uncertainty-driven active learning for 4x super-resolution.
//!
//! A probabilistic super-resolution network is pretrained on images drawn
//! from statistical image models, scores an unlabeled target-domain pool by
//! its mean predicted variance, and is fine-tuned on the top-K most
//! uncertain samples.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: dense tensors, a reverse-mode tape and Adam.
//! - [`data`]: image tensors, IO, the 4x box downsampler, manifests and the
//!   procedural target-domain corpora.
//! - [`simgen`]: spectrum, wavelet-marginal and color-histogram generators.
//! - [`model`]: the heteroscedastic SR network, its Gaussian NLL and training.
//! - [`metrics`]: MSE/MAE/PSNR/SSIM, relative boost and uncertainty diagnostics.
//! - [`active`]: pool scoring, top-K and random selection, and the
//!   per-arm pipeline.

pub mod active;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod simgen;

pub use error::{Error, Result};
