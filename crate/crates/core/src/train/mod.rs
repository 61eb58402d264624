//! Objectives, modality-permutation augmentation and the training loop.

mod augment;
mod config;
mod fit;
mod labels;
mod objective;

pub use augment::{permute_augment, permute_rows, permute_rows_with, Permuted};
pub use config::{parse_kv, TrainConfig};
pub use fit::{evaluate, fit, EpochRecord, Evaluation, FitOutcome};
pub use labels::{labels_from_spans, Span};
pub use objective::{
    batch_gradients, binary_targets, example_loss, l2_penalty, multitask_loss, BatchGradients, Example,
};
