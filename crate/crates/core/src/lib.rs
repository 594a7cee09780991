//! Rockafellian relaxation for training classifiers on contaminated labels.
//!
//! Training alternates two block updates. With the sample weights fixed,
//! the model takes weighted (optionally FGSM-perturbed) SGD epochs. With the
//! model fixed, the weights are re-solved from the current per-sample losses
//! as a total-variation-penalized linear program whose solution is available
//! in closed form: samples whose loss exceeds `c_min + gamma` are dropped and
//! their mass is handed to the minimum-loss samples.
//!
//! Modules:
//!
//! - [`reweight`]: the inner weight problem, its closed-form solution,
//!   optimality certificates and automatic `gamma` selection.
//! - [`model`]: small softmax classifiers with hand-written backpropagation.
//! - [`data`]: IDX loading, class subsets, synthetic data and label
//!   contamination with ground-truth bookkeeping.
//! - [`trainer`]: the outer block-coordinate loop and per-iteration records.

pub mod data;
pub mod error;
pub mod model;
pub mod reweight;
pub mod trainer;

#[cfg(feature = "oracle")]
pub mod verify;

pub use error::{Error, Result};
