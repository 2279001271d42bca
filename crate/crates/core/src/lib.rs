//! Sim-to-real propeller fault diagnosis with a difference-based twin
//! convolutional network.
//!
//! The crate is split along the data path:
//!
//! * [`quadsim`] flies a simulated quadrotor in a "simulation" (source) and a
//!   perturbed "reality" (target) configuration, with propeller damage.
//! * [`dataset`] windows those flights into 7-row samples and assembles the
//!   training/test bundle.
//! * [`ddcnn`] is the twin feature extractor, difference features, classifier
//!   head and losses.
//! * [`training`] runs the training procedure, baselines and evaluation.
//! * [`nn`] is the small autodiff engine everything above is built on.

// `!(x >= 0.0)` is the NaN-rejecting check throughout, and fixed-size vector
// maths reads better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod ddcnn;
pub mod error;
pub mod nn;
pub mod quadsim;
pub mod training;

pub use error::{Error, Result};
