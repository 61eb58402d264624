//! Time-averaged cross-entropy, the multitask mix, the l2 term and the
//! gradient of the whole objective for one mini-batch.

use numcore::{softmax_xent_labels, Real, Tensor};
use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{BatchTape, MultiQt};

/// One whole call: inputs and per-step gold labels at the output rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<R: Real = f32> {
    /// `[T_a, 40]`
    pub audio: Tensor<R>,
    /// `[T_a / 2, 29]`
    pub text: Tensor<R>,
    /// `T_a / 8` class ids, 0 = None.
    pub labels: Vec<usize>,
}

impl<R: Real> Example<R> {
    pub fn cast<S: Real>(&self) -> Example<S> {
        Example {
            audio: self.audio.cast(),
            text: self.text.cast(),
            labels: self.labels.clone(),
        }
    }
}

/// `beta * loss_bin + (1 - beta) * loss_k`
pub fn multitask_loss(loss_k: f64, loss_bin: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        loss_k
    } else if beta == 1.0 {
        loss_bin
    } else {
        beta * loss_bin + (1.0 - beta) * loss_k
    }
}

/// 1 where the gold label is any question class.
pub fn binary_targets(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|&l| usize::from(l != 0)).collect()
}

/// Per-example loss terms and logit gradients scaled by `scale`.
pub(crate) struct ExampleTerms<R: Real> {
    pub loss: f64,
    pub loss_k: f64,
    pub grads: (Tensor<R>, Option<Tensor<R>>),
}

fn scaled<R: Real>(mut t: Tensor<R>, s: f64) -> Tensor<R> {
    let s = R::from_f64(s);
    t.data_mut().iter_mut().for_each(|v| *v *= s);
    t
}

pub(crate) fn example_terms<R: Real>(
    logits: &Tensor<R>,
    logits_bin: Option<&Tensor<R>>,
    labels: &[usize],
    beta: f64,
    scale: f64,
) -> Result<ExampleTerms<R>> {
    let k = softmax_xent_labels(logits, labels)?;
    match logits_bin {
        Some(b) => {
            let bin = softmax_xent_labels(b, &binary_targets(labels))?;
            Ok(ExampleTerms {
                loss: multitask_loss(k.loss, bin.loss, beta),
                loss_k: k.loss,
                grads: (
                    scaled(k.grad_logits, (1.0 - beta) * scale),
                    Some(scaled(bin.grad_logits, beta * scale)),
                ),
            })
        }
        None => Ok(ExampleTerms {
            loss: k.loss,
            loss_k: k.loss,
            grads: (scaled(k.grad_logits, scale), None),
        }),
    }
}

/// Inference-mode time-averaged K-class cross-entropy of one call.
pub fn example_loss<R: Real>(model: &MultiQt<R>, x_a: &Tensor<R>, x_s: &Tensor<R>, labels: &[usize]) -> Result<f64> {
    let (logits, _) = model.logits(x_a, x_s)?;
    Ok(softmax_xent_labels(&logits, labels)?.loss)
}

/// `0.5 * coef * sum ||theta||^2` over trainable tensors.
pub fn l2_penalty<R: Real>(model: &MultiQt<R>, coef: f64) -> f64 {
    0.5 * coef * model.trainable().iter().map(|t| t.sum_squares()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct BatchGradients<R: Real> {
    /// Mean example loss plus the l2 term.
    pub objective: f64,
    /// Mean of the per-example multitask losses.
    pub data_loss: f64,
    /// Mean of the per-example K-class losses.
    pub loss_k: f64,
    pub example_losses: Vec<f64>,
    /// In [`MultiQt::trainable`] order.
    pub grads: Vec<Tensor<R>>,
}

/// Training-mode objective and its gradient over one mini-batch. The binary
/// loss enters only when the model has a binary head.
pub fn batch_gradients<R: Real>(
    model: &MultiQt<R>,
    batch: &[&Example<R>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(BatchGradients<R>, BatchTape<R>)> {
    let inputs: Vec<(&Tensor<R>, &Tensor<R>)> = batch.iter().map(|e| (&e.audio, &e.text)).collect();
    let (outs, tape) = model.forward_batch(&inputs, rng)?;
    let m = batch.len() as f64;
    let mut example_losses = Vec::with_capacity(batch.len());
    let mut loss_k = 0.0;
    let mut logit_grads = Vec::with_capacity(batch.len());
    for ((logits, bin), ex) in outs.iter().zip(batch) {
        if ex.labels.len() != logits.rows() {
            return Err(Error::Input(format!(
                "example has {} labels for {} output steps",
                ex.labels.len(),
                logits.rows()
            )));
        }
        let t = example_terms(logits, bin.as_ref(), &ex.labels, cfg.multitask_beta, 1.0 / m)?;
        example_losses.push(t.loss);
        loss_k += t.loss_k;
        logit_grads.push(t.grads);
    }
    let mut grads = model.backward_batch(&tape, &logit_grads)?;
    let l2c = R::from_f64(cfg.l2);
    if cfg.l2 != 0.0 {
        for (g, p) in grads.iter_mut().zip(model.trainable()) {
            for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
                *gv += l2c * *pv;
            }
        }
    }
    let data_loss = example_losses.iter().sum::<f64>() / m;
    Ok((
        BatchGradients {
            objective: data_loss + l2_penalty(model, cfg.l2),
            data_loss,
            loss_k: loss_k / m,
            example_losses,
            grads,
        },
        tape,
    ))
}
