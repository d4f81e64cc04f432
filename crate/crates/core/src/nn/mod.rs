//! Minimal differentiable-network engine: layers, softmax cross-entropy
//! training with Adam, structured pruning, and layer reinitialization.
//! Small enough to audit, big enough to train desk-scale EEG classifiers.

mod layers;
mod network;
mod prune;
mod tensor;
mod train;

pub use layers::LayerSpec;
pub use network::{Network, NetworkConfig};
pub use prune::{prune, reinit_layers, LayerSelector, PruneStrategy};
pub use tensor::Tensor;
pub use train::{
    evaluate, gradient_check, train, AdamState, EpochMetrics, Metrics, TrainConfig, Trainer,
};

pub(crate) use layers::Layer;
