//! Reward-free exploration by maximizing a k-nearest-neighbor particle entropy
//! in a learned latent space, followed by fine-tuning on sparse task rewards.
//!
//! * [`geometry`]: exact k-NN search (brute force and k-d tree)
//! * [`entropy`]: particle entropy, intrinsic rewards, reward normalization
//! * [`representation`]: encoder/projection networks and contrastive training
//! * [`environments`]: grid worlds, a point mass, sparse goal tasks
//! * [`agent`]: replay buffer, tabular Q-learning, pre-training and fine-tuning
//! * [`experiments`]: coverage, reward decay, comparisons, k-NN benchmarks

pub mod agent;
pub mod entropy;
pub mod environments;
mod error;
pub mod exec;
pub mod experiments;
pub mod geometry;
pub mod representation;

pub use error::{Error, Result};
pub use exec::Execution;
