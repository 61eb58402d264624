//! The modality grid, the permutation ablation and the baseline comparison on
//! one synthetic dataset.

use serde::{Deserialize, Serialize};

use super::runs::{mean_scores, permute_test, split, train_and_test_val, Scores, Split, TestPermutation, TEST_FOLD};
use crate::baseline::{BowConfig, BowModel};
use crate::error::Result;
use crate::model::{Modality, ModelConfig};
use crate::synthdata::{gen_dataset, Dataset, GenConfig};
use crate::train::{evaluate, Example, TrainConfig};

/// Mixed into the dataset seed to draw the validation calls.
pub const VAL_SEED_SALT: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Extra calls, generated apart from the train/test folds, for
    /// best-epoch selection.
    pub val_calls: usize,
    pub seeds: Vec<u64>,
    pub bow: BowConfig,
}

impl Setup {
    /// 250 desk-size question calls (200 train, 50 test), 25 validation
    /// calls, three seeds.
    pub fn desk() -> Self {
        Self {
            gen: GenConfig::desk().with_calls(250),
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            val_calls: 25,
            seeds: vec![0, 1, 2],
            bow: BowConfig::desk(),
        }
    }

    pub fn desk_symptom() -> Self {
        Self {
            gen: GenConfig::desk_symptom().with_calls(250),
            ..Self::desk()
        }
    }
}

pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub val: Vec<Example<f32>>,
}

pub fn prepare(setup: &Setup) -> Result<Prepared> {
    let dataset = gen_dataset(&setup.gen)?;
    let split = split(&dataset, TEST_FOLD);
    let val_cfg = setup
        .gen
        .clone()
        .with_seed(setup.gen.seed ^ VAL_SEED_SALT)
        .with_calls(setup.val_calls);
    let val = gen_dataset(&val_cfg)?.calls.iter().map(|c| c.example()).collect();
    Ok(Prepared { dataset, split, val })
}

/// One trained model evaluated on the test fold under some permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub modality: Modality,
    pub seed: u64,
    pub train_p_a: f64,
    pub train_p_s: f64,
    pub best_epoch: usize,
    /// Mean K-class training loss of every epoch.
    pub train_losses: Vec<f64>,
    pub tests: Vec<(TestPermutation, Scores)>,
}

impl RunScores {
    pub fn unpermuted(&self) -> Scores {
        self.under(TestPermutation::NONE).expect("every run is tested unpermuted")
    }

    /// Lowest training loss within the first `epochs` epochs.
    pub fn best_train_loss_within(&self, epochs: usize) -> Option<f64> {
        self.train_losses.iter().take(epochs).copied().min_by(f64::total_cmp)
    }

    pub fn under(&self, p: TestPermutation) -> Option<Scores> {
        self.tests.iter().find(|(q, _)| *q == p).map(|(_, s)| *s)
    }
}

/// Train one model per seed and test it unpermuted and under each of `perms`.
pub fn seeded_runs(
    setup: &Setup,
    data: &Prepared,
    modality: Modality,
    p_a: f64,
    p_s: f64,
    perms: &[TestPermutation],
) -> Result<Vec<RunScores>> {
    setup
        .seeds
        .iter()
        .map(|&seed| {
            let mc = setup.model.clone().with_modality(modality).with_seed(seed);
            let tc = TrainConfig {
                seed,
                p_a,
                p_s,
                ..setup.train.clone()
            };
            let r = train_and_test_val(&mc, &tc, &data.split, &data.val)?;
            let mut tests = vec![(TestPermutation::NONE, r.scores())];
            for &p in perms.iter().filter(|p| **p != TestPermutation::NONE) {
                let ev = evaluate(&r.fit.model, &permute_test(&data.split.test, p, seed))?;
                tests.push((p, Scores::of(&ev)));
            }
            let train_losses = r.fit.log.iter().filter(|e| e.split == "train").map(|e| e.loss).collect();
            Ok(RunScores {
                modality,
                seed,
                train_p_a: p_a,
                train_p_s: p_s,
                best_epoch: r.fit.best_epoch,
                train_losses,
                tests,
            })
        })
        .collect()
}

pub fn mean_under(runs: &[RunScores], p: TestPermutation) -> Scores {
    let s: Vec<Scores> = runs.iter().filter_map(|r| r.under(p)).collect();
    mean_scores(&s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityGrid {
    pub audio: Vec<RunScores>,
    pub text: Vec<RunScores>,
    pub both: Vec<RunScores>,
}

impl ModalityGrid {
    pub fn mean(&self, m: Modality) -> Scores {
        let runs = match m {
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
            Modality::Both => &self.both,
        };
        mean_under(runs, TestPermutation::NONE)
    }

    pub fn all_runs(&self) -> impl Iterator<Item = &RunScores> {
        self.audio.iter().chain(&self.text).chain(&self.both)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<8} {:>10} {:>10}\n", "input", "timestep", "instance");
        for m in [Modality::Audio, Modality::Text, Modality::Both] {
            let x = self.mean(m);
            s += &format!("{:<8} {:>10.3} {:>10.3}\n", m.short(), x.timestep_f1, x.instance_f1);
        }
        s
    }
}

/// Audio-only, text-only and fused models over every seed. The fused runs are
/// also tested with text and with audio permuted, so they double as the
/// vanilla half of the ablation.
pub fn modality_grid(setup: &Setup, data: &Prepared) -> Result<ModalityGrid> {
    Ok(ModalityGrid {
        audio: seeded_runs(setup, data, Modality::Audio, 0.0, 0.0, &[])?,
        text: seeded_runs(setup, data, Modality::Text, 0.0, 0.0, &[])?,
        both: seeded_runs(
            setup,
            data,
            Modality::Both,
            0.0,
            0.0,
            &[TestPermutation::AUDIO, TestPermutation::TEXT],
        )?,
    })
}

/// Training permutation probabilities of the robust model.
pub const ABLATION_P_A: f64 = 0.1;
pub const ABLATION_P_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub vanilla: Vec<RunScores>,
    pub permuted: Vec<RunScores>,
}

impl AblationGrid {
    pub const TESTS: [TestPermutation; 3] = [TestPermutation::NONE, TestPermutation::AUDIO, TestPermutation::TEXT];

    /// Rows: trained with or without permutation; columns: test permutation.
    pub fn table(&self) -> String {
        let mut s = format!("{:<18}", "train \\ test perm");
        for t in Self::TESTS {
            s += &format!(" {:>16}", t.short());
        }
        s.push('\n');
        for (name, runs) in [("vanilla", &self.vanilla), ("p_a=0.1 p_s=0.5", &self.permuted)] {
            s += &format!("{name:<18}");
            for t in Self::TESTS {
                let x = mean_under(runs, t);
                s += &format!("    {:>5.3} / {:>5.3}", x.timestep_f1, x.instance_f1);
            }
            s.push('\n');
        }
        s + "(timestep / instance macro F1, mean over seeds)\n"
    }
}

/// The 2x3 permutation grid. Pass the fused runs of a modality grid as
/// `vanilla` to reuse them.
pub fn ablation_grid(setup: &Setup, data: &Prepared, vanilla: Option<Vec<RunScores>>) -> Result<AblationGrid> {
    let tests = &AblationGrid::TESTS;
    let vanilla = match vanilla {
        Some(v) => v,
        None => seeded_runs(setup, data, Modality::Both, 0.0, 0.0, tests)?,
    };
    let permuted = seeded_runs(setup, data, Modality::Both, ABLATION_P_A, ABLATION_P_S, tests)?;
    Ok(AblationGrid { vanilla, permuted })
}

/// Baseline scores on the test fold, trained on the training folds.
pub fn baseline_scores(setup: &Setup, data: &Prepared) -> Result<Scores> {
    let model = BowModel::train(&data.dataset.not_fold(TEST_FOLD), setup.model.classes, &setup.bow)?;
    let (ts, inst) = model.evaluate(&data.dataset.fold(TEST_FOLD))?;
    Ok(Scores {
        timestep_f1: ts.macro_f1,
        instance_f1: inst.macro_f1,
    })
}
