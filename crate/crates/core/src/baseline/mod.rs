//! Bag-of-n-grams baseline: chi-squared selected TF-IDF features of the
//! decoded transcript, a feed-forward classifier over sliding word windows,
//! and a per-step majority vote.

mod fnn;
mod vocab;

pub use fnn::{sliding_windows, training_documents, vote_steps, BowConfig, BowModel, Fnn};
pub use vocab::{char_ngrams, chi2_scores, smooth_idf, word_ngrams, BowVocab, Feature, Group};
