//! Multimodal temporal sequence labeling over paired audio features and ASR
//! character posteriors.

pub mod baseline;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod records;
pub mod stream;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
pub use model::{FusionMode, Modality, ModelConfig, MultiQt};
