//! Offline imitation learning of the expert flocking controller.

mod adam;
mod dataset;
mod erm;
mod train;

#[cfg(test)]
mod tests;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{expert_trajectory, Dataset, DatasetManifest, SplitSizes};
pub use erm::{erm_loss, register_at, WdGnnController};
pub use train::{
    clip_global_norm, flocking_architecture, rollout_metric, train, EpochRecord, ModelKind, TrainConfig, TrainOutcome,
};
