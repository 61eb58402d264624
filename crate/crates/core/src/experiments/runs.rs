//! Train/evaluate drivers over synthetic datasets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Modality, ModelConfig, MultiQt};
use crate::synthdata::{Dataset, SyntheticCall, FOLDS};
use crate::train::{evaluate, fit, permute_rows, Evaluation, Example, FitOutcome, TrainConfig};

/// Fold held out for testing; the rest train.
pub const TEST_FOLD: usize = FOLDS - 1;

pub struct Split {
    pub train: Vec<Example<f32>>,
    pub test: Vec<Example<f32>>,
}

pub fn examples(calls: &[&SyntheticCall]) -> Vec<Example<f32>> {
    calls.iter().map(|c| c.example()).collect()
}

/// Folds other than `test_fold` for training, `test_fold` for testing.
pub fn split(ds: &Dataset, test_fold: usize) -> Split {
    Split {
        train: examples(&ds.not_fold(test_fold)),
        test: examples(&ds.fold(test_fold)),
    }
}

/// Which test streams are shuffled along time before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestPermutation {
    pub audio: bool,
    pub text: bool,
}

impl TestPermutation {
    pub const NONE: Self = Self { audio: false, text: false };
    pub const TEXT: Self = Self { audio: false, text: true };
    pub const AUDIO: Self = Self { audio: true, text: false };

    pub fn short(&self) -> &'static str {
        match (self.audio, self.text) {
            (false, false) => "none",
            (true, false) => "audio",
            (false, true) => "text",
            (true, true) => "both",
        }
    }
}

/// Copy of `data` with the selected streams permuted. The permutation of
/// example `i` depends only on `seed` and `i`.
pub fn permute_test(data: &[Example<f32>], which: TestPermutation, seed: u64) -> Vec<Example<f32>> {
    data.iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Example {
                audio: if which.audio { permute_rows(&ex.audio, &mut rng) } else { ex.audio.clone() },
                text: if which.text { permute_rows(&ex.text, &mut rng) } else { ex.text.clone() },
                labels: ex.labels.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub timestep_f1: f64,
    pub instance_f1: f64,
}

impl Scores {
    pub fn of(ev: &Evaluation) -> Self {
        Self {
            timestep_f1: ev.timestep.macro_f1,
            instance_f1: ev.instance.macro_f1,
        }
    }
}

pub struct RunResult {
    pub fit: FitOutcome,
    pub test: Evaluation,
}

impl RunResult {
    pub fn scores(&self) -> Scores {
        Scores::of(&self.test)
    }
}

/// Train a fresh model on `split.train` and evaluate it on `split.test`.
pub fn train_and_test(model: &ModelConfig, train: &TrainConfig, split: &Split) -> Result<RunResult> {
    train_and_test_val(model, train, split, &[])
}

/// As [`train_and_test`], keeping the epoch with the best instance F1 on `val`.
pub fn train_and_test_val(
    model: &ModelConfig,
    train: &TrainConfig,
    split: &Split,
    val: &[Example<f32>],
) -> Result<RunResult> {
    let m = MultiQt::new(model.clone())?;
    let fit = fit(m, &split.train, val, train, None)?;
    let test = evaluate(&fit.model, &split.test)?;
    Ok(RunResult { fit, test })
}

/// Mean scores over seeds for one modality; the seed sets both the
/// initialization and the training stream.
pub fn modality_runs(
    model: &ModelConfig,
    train: &TrainConfig,
    split: &Split,
    modality: Modality,
    seeds: &[u64],
) -> Result<Vec<Scores>> {
    seeds
        .iter()
        .map(|&s| {
            let mc = model.clone().with_modality(modality).with_seed(s);
            let tc = TrainConfig { seed: s, ..train.clone() };
            Ok(train_and_test(&mc, &tc, split)?.scores())
        })
        .collect()
}

pub fn mean_scores(s: &[Scores]) -> Scores {
    let n = s.len().max(1) as f64;
    Scores {
        timestep_f1: s.iter().map(|x| x.timestep_f1).sum::<f64>() / n,
        instance_f1: s.iter().map(|x| x.instance_f1).sum::<f64>() / n,
    }
}
