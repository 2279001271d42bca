//! The twin network: shared extractor, difference features, classifier
//! head, losses and the healthy reference used at test time.

pub mod arch;
pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod signature;

pub use arch::{ArchConfig, Variant};
pub use checkpoint::{load_model, save_model, ModelManifest};
pub use loss::{
    build_loss, check_loss_gradients, classification_loss, da_loss, da_loss_from_differences,
    loss_and_gradients, mean_of_norms, total_loss, LossNodes, LossValues, StepBatches,
};
pub use model::{
    argmax_label, classify, compute_healthy_reference, difference_test, difference_train,
    extract_features, inference_inputs, predict, HealthyReference, Model, Prediction,
};
pub use signature::{class_signatures, ClassSignature};
