//! Minimal neural-network engine: tensors, a reverse-mode tape, the layer
//! set the twin network needs, Adam, checkpoints and a gradient oracle.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{cross_entropy, softmax_slice, BoundParams, Gradients, Graph, NodeId, LOG_CLAMP};
pub use layers::{LayerSpec, Mode, Sequential};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::ParamSet;
pub use tensor::{Precision, Scalar, Tensor};
