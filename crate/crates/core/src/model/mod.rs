//! Probabilistic super-resolution network: a convolutional body with a mean
//! head and a variance head, trained by Gaussian negative log-likelihood.

mod checkpoint;
mod loss;
mod network;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{nll_graph, nll_loss, optimal_sigma, residual_power};
pub use network::{
    forward, forward_batch, forward_graph, ArchDescriptor, HeadNodes, NetworkParams, PredictiveOutput,
    DEFAULT_VAR_FLOOR, LEAKY_SLOPE,
};
pub use train::{dataset_loss, finetune, train, train_step, TrainConfig, TrainReport};
