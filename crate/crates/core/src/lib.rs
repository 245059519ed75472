//! Complementary masking for unsupervised domain adaptation, at desk scale.
//!
//! The crate bundles a small reverse-mode tensor engine, block mask
//! construction, Monte-Carlo harnesses for the information-preservation,
//! generalization and feature-consistency properties of complementary masks,
//! a compressed-sensing recovery harness, a synthetic domain-shift dataset
//! generator and a mean-teacher trainer that uses complementary masked views
//! of target images.
//!
//! The tensor engine is generic over [`Scalar`] (`f32` and `f64`); the
//! experiment harnesses run in `f64`. Aliases for the common instantiations
//! live at the crate root.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod optim;
pub mod recovery;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod tensor;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision tensor, the default for all experiments.
pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Graph = autodiff::Graph<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Adam = optim::Adam<f64>;
