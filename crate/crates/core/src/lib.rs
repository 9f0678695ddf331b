//! Sleep and dream hybrid classifiers.
//!
//! A chain of supervised blocks is fused with a frozen, self-supervised
//! autoencoder. A *sleep* connection adds the encoder's view of a hidden
//! state to the block output; a *dream* connection adds the full
//! reconstruction instead and also routes it through a parallel branch
//! that feeds the classifier head.
//!
//! Everything runs on a small reverse-mode autodiff tape
//! ([`autodiff::Graph`]) in 64-bit precision.

pub mod autodiff;
pub mod autoencoder;
pub mod blocks;
pub mod config;
mod binio;
pub mod cost;
pub mod data;
pub mod dream;
pub mod error;
pub mod gradcheck;
pub mod hash;
pub mod init;
pub mod layers;
pub mod model;
pub mod optim;
pub mod param;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{IdTensor, Tensor};

/// Scalar type of every tensor.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type of every tensor.
#[cfg(feature = "f32")]
pub type Real = f32;
