//! Signal-estimator based explanations for small feedforward networks.
//!
//! The crate bundles a minimal network engine (dense, conv2d, ReLU and
//! max-pooling layers), the four per-neuron signal estimators (identity,
//! filter, linear and two-component), seven backward-pass explanation
//! methods, and the two quantitative evaluation protocols (the residual
//! correlation measure and patch degradation).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases exported at the crate root fix the scalar to `f64`, which is what
//! the file formats and the CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod codec;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod explain;
pub mod network;
pub mod scalar;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type NetworkModel = network::NetworkModel<f64>;
pub type Layer = network::Layer<f64>;
pub type ActivationTrace = network::ActivationTrace<f64>;
pub type NeuronStats = estimators::NeuronStats<f64>;
pub type PatternSet = estimators::PatternSet<f64>;
pub type Explanation = explain::Explanation<f64>;
pub type Explainer<'a> = explain::Explainer<'a, f64>;
pub type Dataset = data::Dataset<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type NetworkModel32 = network::NetworkModel<f32>;
