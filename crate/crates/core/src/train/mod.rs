//! Optimization: Adam, learning-rate schedules, checkpoints and the epoch loop.

mod adam;
pub mod checkpoint;
mod schedule;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use schedule::{build_schedule, lr_at, schedule_names, LrSchedule, Plateau, Staged};
pub use trainer::{checkpoint_config, monotone_violations, HistoryRow, Trainer, CHECKPOINT_FILE, HISTORY_FILE, HISTORY_HEADER};
