//! Training machinery: losses/hard-example mining, optimizers and schedules,
//! augmentation and the batch trainer.

mod augment;
mod losses;
mod optim;
mod trainer;

pub use augment::{augment_sample, AugmentedSample};
pub use losses::mohem_select;
pub use optim::{LrSchedule, OptimKind, Optimizer};
pub use trainer::{default_threads, prepare_pairs, PreparedPair, StepStats, Trainer, TrainerSettings};
