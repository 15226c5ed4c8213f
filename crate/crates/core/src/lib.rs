//! Pairwise learning-to-rank for hit song prediction.
//!
//! The crate trains convolutional raters on log-mel inputs with a mix of
//! squared-error regression and a margin ranking hinge over song pairs,
//! shares one parameter set across both legs of each pair, and evaluates
//! the resulting rankings on the top decile of each test fold.

pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision tensor, the default for training.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
pub type ParamSet64 = tensor::ParamSet<f64>;
pub type Graph64 = tensor::Graph<f64>;
