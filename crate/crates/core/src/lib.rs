//! Cost-sensitive regularization for ordinal classification.
//!
//! This crate holds the numerical side of the toolkit and builds without the
//! standard library (it needs `alloc`). It provides:
//!
//! * [`cost_matrices`]: the quadratic ground cost, row normalization of
//!   inter-observer confusion counts and the averaged atomic sub-task cost.
//! * [`losses`]: cross-entropy, focal loss, Gaussian label smoothing, the
//!   cost-sensitive penalty and their analytic gradients with respect to
//!   logits.
//! * [`metrics`]: confusion matrices, quadratic-weighted kappa, average
//!   class accuracy, Kendall tau-b and the Hand–Till multi-class AUC.
//! * [`bootstrap`]: stratified, paired bootstrap significance tests.
//! * [`model`] and [`trainer`]: small differentiable classifiers and an SGD
//!   harness with plateau decay, early stopping, oversampling and the
//!   lambda sweep.
//! * [`data`]: in-memory datasets, synthetic ordinal data and label noise.
//!
//! File formats and the command-line interface live in the `ordcost` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bootstrap;
pub mod cost_matrices;
pub mod data;
mod error;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod losses;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
