//! Mini-batch training of the end-to-end detector and its ablation baselines.

mod config;
mod report;
mod train;

pub use config::{TrainConfig, Variant};
pub use report::{EpochRecord, StopReason, TrainReport};
pub use train::{
    stratified_batches, train_ablation, train_deepsvdd, train_from, train_imdad, train_variant,
    update_multipliers, Detector,
};
