//! Pixel-wise cross-entropy training with momentum SGD.

mod loss;
mod sgd;
mod trainer;

pub use loss::{cross_entropy, LossValue, MIN_PROB};
pub use sgd::sgd_momentum_step;
pub use trainer::{
    best_index, coarse_accuracy, fit, fit_with, EpochRecord, EpochReport, FitOutcome, TrainConfig, Trainer,
    TrainingHistory,
};
