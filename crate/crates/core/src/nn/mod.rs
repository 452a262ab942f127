//! Minimal neural-network core: dense and 1-D convolutional layers,
//! activations, losses, exact backpropagation, SGD/Adam and the
//! halve-on-plateau learning-rate schedule.

mod layer;
mod loss;
mod network;
mod optim;
pub mod persist;
mod schedule;
mod tensor;

pub use layer::{softmax, LayerSpec};
pub use loss::{loss_cross_entropy, loss_cross_entropy_grad, loss_mse, loss_mse_grad, PROB_FLOOR};
pub use network::{ForwardCache, Gradients, Network};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use persist::{load_network, save_network};
pub use schedule::{LrEvent, LrSchedule, LR_CEILING, LR_FLOOR};
pub use tensor::Tensor;

/// Default negative slope for leaky ReLU.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
