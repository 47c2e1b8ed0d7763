//! Core library for a debiasing variational autoencoder (DB-VAE) pipeline.
//!
//! The crate provides everything below the command line:
//!
//! - [`tensor`]: dense row-major tensors generic over `f32`/`f64`, plus a
//!   GEMM entry point.
//! - [`ops`]: hand-derived forward/backward kernels (conv, transpose conv,
//!   dense, activations, losses).
//! - [`stack`]: sequential layer stacks with shape validation, caching and
//!   backprop.
//! - [`adam`]: the Adam optimizer.
//! - [`model`]: the DB-VAE itself — shared encoder, classifier head,
//!   latent heads and decoder — with training steps and checkpoints.
//! - [`resampler`]: latent-density histograms and the adaptive sampling
//!   distribution used for debiasing.
//! - [`data`]: PGM ingestion, resizing, stratified splits and the
//!   synthetic glyph-face corpus.
//! - [`metrics`]: confusion matrices, balanced accuracy, bias/variance
//!   aggregation and least-squares fits.
//! - [`par`]: the rayon/sequential execution switch.
//!
//! Every stochastic component draws from a labelled stream derived from a
//! single run seed ([`rng`]), and all parallel reductions use fixed chunk
//! sizes, so end-to-end runs are bit-for-bit reproducible — including
//! across the parallel/sequential boundary.

pub mod adam;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod par;
pub mod resampler;
pub mod rng;
pub mod stack;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
