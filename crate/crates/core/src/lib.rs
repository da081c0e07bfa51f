//! Recurrent time-series classifier that separates per-sample feature
//! importance into a time-invariant part (feature-wise linear modulation of
//! the inputs) and a time-variant part (per-window self-attention), together
//! with the training, interpretation and data tooling around it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the pipeline
//! (datasets, checkpoints, reports) runs in `f64`, exposed through the
//! aliases below.

pub mod autodiff;
pub mod baseline;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Parameters64 = model::Parameters<f64>;
pub type Parameters32 = model::Parameters<f32>;
pub type ForwardTrace64 = model::ForwardTrace<f64>;
