//! Minimal tensor engine: the layer kinds of a VGG-M style fast R-CNN
//! network, their hand-written backward passes, and SGD.

pub mod activation;
pub mod conv;
pub mod fc;
pub mod layers;
pub mod lrn;
pub mod network;
pub mod pool;
pub mod sgd;
mod tensor;
pub mod weights;

#[cfg(test)]
pub(crate) mod testing;

pub use layers::{LayerKind, LayerSpec, LayerTable};
pub use lrn::LrnParams;
pub use network::{Network, TrainForward, WeightInit};
pub use pool::RoiPoolSpec;
pub use sgd::{Sgd, SgdConfig};
pub use tensor::Tensor;
pub use weights::{load_weights, save_weights, LoadReport};
