//! Metric learning with structured Gaussian manifolds.
//!
//! An encoder maps inputs into an embedding space where each class is shaped
//! into an isotropic Gaussian. Training minimises the squared error between
//! the Bayes class posterior under those Gaussians and the one-hot labels
//! ([`gaussian_manifold`], [`trainer`]). Classes can then be split into
//! Gaussian sub-classes by alternating training with per-class EM
//! ([`subspace`]). A triplet-loss trainer serves as the baseline, and
//! [`metrics`] and [`clustering`] cover the evaluation side: NMI, Recall@K,
//! KNN and posterior classification, K-means, GMM-EM, medoids and Top-k.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::op_ref)]

pub mod clustering;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gaussian_manifold;
pub mod gradcheck;
pub mod metrics;
pub mod numerics;
pub mod subspace;
pub mod trainer;
pub mod triplet;

pub use data::{BlobSpec, Dataset, EmbeddingTable, Standardizer};
pub use encoder::{Activation, Checkpoint, EncoderParams, EncoderSpec};
pub use error::{Error, Result};
pub use gaussian_manifold::{ClassGaussians, SgmLoss};
pub use numerics::RngStream;
