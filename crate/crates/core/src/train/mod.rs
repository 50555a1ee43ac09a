//! Loss, optimizer, learning-rate schedule, training loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_FILE};
pub use config::TrainConfig;
pub use loss::{cross_entropy, softmax_cross_entropy, PROB_FLOOR};
pub use schedule::{plateau_schedule, plateau_trace, PlateauSchedule};
pub use trainer::{
    evaluate, mean_loss, sample_gradients, sample_loss, train_init, train_loop, EpochRecord, LoopOptions, TrainOutcome,
    BEST_DIR, FINAL_DIR, LOG_FILE,
};
