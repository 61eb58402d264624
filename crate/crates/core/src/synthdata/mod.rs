//! Synthetic paired-modality calls with planted question or symptom
//! segments, a simulated ASR character posterior, and the dataset format.
//!
//! The audio stream is a 40-channel surrogate for log-mel features, not
//! synthesized sound; the model only sees opaque feature frames.

mod config;
mod dataset;
pub mod lexicon;
pub mod render;
pub mod script;

pub use config::{GenConfig, Task};
pub use dataset::{
    assign_folds, call_from_bytes, call_rng, call_to_bytes, dump_call, gen_call, gen_dataset, read_dataset,
    symptom_variant, write_dataset, CallMeta, Dataset, SyntheticCall, FOLDS, FRAMES_PER_STEP, MANIFEST,
};
pub use render::{character_error_rate, decode_text, decode_words, TimedWord};
pub use script::{gen_script, Script};
