//! Observation encoders and their contrastive training.

pub mod checkpoint;
mod contrastive;
mod encoder;
mod mlp;

pub use contrastive::{
    augment, contrastive_loss_and_grads, finite_difference_check, loss_from_projections, train_step,
    AugmentConfig, ContrastiveOutput, OptimizerState,
};
pub use encoder::{Encoder, EncoderArch, EncoderParams, ProjectionArch, ProjectionParams};
pub use mlp::{Layer, Matrix, Mlp, Tape, LAYER_NORM_VAR_FLOOR};

/// Default contrastive temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
/// Default Adam learning rate for the encoder and projection.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
