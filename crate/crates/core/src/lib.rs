//! Small convolutional-network toolkit: tensors, layers with hand-written
//! backpropagation, optimizers, an image data pipeline and a training loop.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{instantiate, parse_model_spec, ModelConfig};
pub use tensor::Tensor;
