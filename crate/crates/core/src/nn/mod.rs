//! Minimal feedforward classifier with explicit forward and backward passes.
//!
//! The network exposes the latent hooks the auditing metrics need: the input
//! `r` to the last hidden layer, the latent features `z`, the logits and the
//! softmax probabilities.

mod data;
mod mlp;
mod params;

pub use data::{dirichlet_partition, gaussian_blobs, BlobConfig, Dataset};
pub use mlp::{
    argmax, cross_entropy, evaluate, forward, grad_check, grad_check_with, gradient, head_logits, init_params,
    loss, predict, softmax, train_local, ForwardTrace, Group, LayerInfo, MlpSpec, TrainConfig,
};
pub use params::ParamVector;
