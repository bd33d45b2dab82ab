//! Gradient-enhanced multifidelity neural network surrogates.
//!
//! The crate is `no_std` with `alloc`; the default `std` feature only switches
//! transcendental functions to the platform libm and lets the GEMM backend pick
//! SIMD kernels at runtime.
//!
//! Layout:
//!
//! - [`diffengine`]: layer propagation with forward input-tangents and the
//!   reverse sweep producing exact parameter gradients of losses that contain
//!   input-gradients.
//! - [`network`]: MLP definition, Glorot initialization, evaluation.
//! - [`models`]: the four variants (NN, GENN, MFNN, GEMFNN), the composite
//!   prediction and the loss functions.
//! - [`training`]: normalization, ADAM and the mini-batch training loop.
//! - [`datagen`]: full factorial and Latin hypercube designs, the three
//!   benchmark function pairs and dataset assembly.
//! - [`validation`]: coefficient of determination and its aggregation.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datagen;
pub mod diffengine;
mod error;
pub mod linalg;
mod math;
pub mod models;
pub mod network;
pub mod training;
pub mod validation;

pub use error::{Error, Result};
pub use linalg::Matrix;
