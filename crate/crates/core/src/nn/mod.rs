//! Layers with explicit forward and backward passes, composite CNN blocks and
//! the sequential [`Network`] that chains them.

pub mod activation;
pub mod blocks;
pub mod init;
pub mod layers;
mod network;

pub use activation::{activation_apply, activation_derivative, softmax, Activation};
pub use blocks::{concat_channels, DenseBlock, Inception, InceptionWidths, Residual};
pub use layers::{
    dropout_forward, global_average_pool, ActivationLayer, Conv2d, Dense, Dropout, Flatten,
    GlobalAvgPool, Pool2d, SoftmaxOutput,
};
pub use network::{GradientSet, Layer, LayerCache, LayerState, Mode, Network, OutputGrad};

/// Generator used for initialization and dropout masks.
pub type Rng = rand_chacha::ChaCha8Rng;
