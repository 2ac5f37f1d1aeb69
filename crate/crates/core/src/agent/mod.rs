//! Tabular Q-learning agent: replay, reward-free pre-training, fine-tuning.

mod buffer;
mod counter;
mod finetune;
pub mod io;
mod latents;
mod pretrain;
mod qtable;

pub use buffer::{ReplayBuffer, Transition};
pub use counter::VisitCounter;
pub use finetune::{finetune, success_episode, FinetuneConfig, FinetuneResult};
pub use pretrain::{
    pretrain, EncoderChoice, EpochStats, PretrainedArtifacts, ReferenceSet, RewardSource, TrainLoopConfig,
};
pub use qtable::{EpsilonSchedule, QTable};
