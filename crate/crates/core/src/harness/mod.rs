//! Configuration, training loop, checkpoints, evaluation and plots.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod plot;
pub mod study;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{Ablation, OptimizerConfig, RunConfig};
pub use eval::{evaluate, evaluate_file, evaluate_net, predict_labels};
pub use train::{
    resume, select_best, train, BestCheckpoint, LogRecord, RunRecord, Trainer, Validation,
};
