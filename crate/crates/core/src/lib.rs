//! Latent-space cluster models for aggregate network data.
//!
//! Nodes belong to groups whose members scatter around a group centre in a
//! latent space; connections form with a Gaussian kernel of the distance.
//! Only the number of connections between groups is observed. This crate
//! computes the closed-form moments of those aggregate counts, turns them
//! into an approximate likelihood by moment matching, samples the posterior,
//! and provides node-level simulation plus independent oracles for checking
//! all of it.

pub mod inference;
pub mod kernel;
pub mod likelihood;
pub mod model;
pub mod moments;
pub mod simulate;
pub mod seed;
pub mod special;

pub use kernel::{ClusterPair, KernelMoments, KernelParams, SharedSide};
pub use likelihood::{AggregateMatrix, BetaBinomialParams, NegBinomialParams};
pub use model::{ModelParams, PriorConfig, UnconstrainedParams};
pub use moments::{GroupConfig, NetworkKind, TermClass, TermTable};
