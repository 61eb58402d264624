//! The MultiQT network and its checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod fusion;
pub mod layers;
pub mod network;

pub use config::{ConvLayer, FusionMode, Modality, ModelConfig, AUDIO_FEATURES, TEXT_FEATURES};
pub use fusion::{fuse, fuse_backward};
pub use layers::{Block, Classifier, ConvBlock, ConvOp, DenseOp, HiddenBlock, LinearOp};
pub use network::{BatchTape, MultiQt, Prediction};
