use std::io::Write;

use numcore::{softmax_xent_labels, Adam, AdamConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::permute_augment;
use super::objective::{batch_gradients, Example};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{instance_prf, timestep_prf, PrfReport};
use crate::model::MultiQt;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `"train"` or `"val"`.
    pub split: String,
    /// Mean K-class cross-entropy.
    pub loss: f64,
    /// Training objective including the multitask mix and l2 (train split only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestep_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the epoch with the best validation instance F1 (the
    /// last epoch when there is no validation data).
    pub model: MultiQt<f32>,
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
    pub log: Vec<EpochRecord>,
    /// Objective of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub predictions: Vec<Vec<usize>>,
    pub timestep: PrfReport,
    pub instance: PrfReport,
}

/// Inference-mode loss, predictions and both metrics.
pub fn evaluate(model: &MultiQt<f32>, data: &[Example<f32>]) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(data.len());
    for ex in data {
        let (logits, _) = model.logits(&ex.audio, &ex.text)?;
        loss += softmax_xent_labels(&logits, &ex.labels)?.loss;
        predictions.push(logits.argmax_rows());
    }
    let gold: Vec<Vec<usize>> = data.iter().map(|e| e.labels.clone()).collect();
    let k = model.classes();
    Ok(Evaluation {
        loss: loss / data.len().max(1) as f64,
        timestep: timestep_prf(&predictions, &gold, k)?,
        instance: instance_prf(&predictions, &gold, k)?,
        predictions,
    })
}

fn emit(log: &mut Option<&mut dyn Write>, rec: &EpochRecord) -> Result<()> {
    if let Some(w) = log {
        let line = serde_json::to_string(rec).map_err(|e| Error::format("log", e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<training log>", e))?;
    }
    Ok(())
}

/// Mini-batch Adam over whole calls for a fixed number of epochs.
///
/// A single ChaCha8 stream seeded with `cfg.seed` drives shuffling,
/// augmentation and dropout, so a run is reproducible bit for bit.
/// Each epoch appends a `train` record (and a `val` record when `val` is
/// non-empty) to the returned log and writes it as a JSON line to `log`.
pub fn fit(
    mut model: MultiQt<f32>,
    train: &[Example<f32>],
    val: &[Example<f32>],
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    });
    let mut records = Vec::new();
    let mut step_losses = Vec::new();
    let mut best: Option<(f64, usize, MultiQt<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let augment = cfg.p_a > 0.0 || cfg.p_s > 0.0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_k, mut sum_obj, mut seen) = (0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Example<f32>> = chunk.iter().map(|&i| &train[i]).collect();
            let augmented;
            let batch: Vec<&Example<f32>> = if augment {
                augmented = permute_augment(&refs, cfg.p_a, cfg.p_s, &mut rng).0;
                augmented.iter().collect()
            } else {
                refs
            };
            let (g, tape) = batch_gradients(&model, &batch, cfg, &mut rng)?;
            if !g.objective.is_finite() || g.grads.iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("objective {} (data loss {})", g.objective, g.data_loss),
                });
            }
            let mut params = model.trainable_mut();
            adam.step(&mut params, &g.grads)?;
            model.update_running(&tape);
            step_losses.push(g.objective);
            sum_k += g.loss_k * batch.len() as f64;
            sum_obj += g.objective * batch.len() as f64;
            seen += batch.len();
        }
        let rec = EpochRecord {
            epoch,
            split: "train".into(),
            loss: sum_k / seen as f64,
            objective: Some(sum_obj / seen as f64),
            timestep_f1: None,
            instance_f1: None,
        };
        emit(&mut log, &rec)?;
        records.push(rec);
        if !val.is_empty() {
            let ev = evaluate(&model, val)?;
            let rec = EpochRecord {
                epoch,
                split: "val".into(),
                loss: ev.loss,
                objective: None,
                timestep_f1: Some(ev.timestep.macro_f1),
                instance_f1: Some(ev.instance.macro_f1),
            };
            emit(&mut log, &rec)?;
            records.push(rec);
            let f1 = ev.instance.macro_f1;
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.clone()));
            }
        }
    }
    Ok(match best {
        Some((f1, epoch, m)) => FitOutcome {
            model: m,
            best_epoch: epoch,
            best_val_f1: Some(f1),
            log: records,
            step_losses,
        },
        None => FitOutcome {
            model,
            best_epoch: cfg.epochs,
            best_val_f1: None,
            log: records,
            step_losses,
        },
    })
}
