//! Feed-forward classifier over TF-IDF windows and its sliding-window
//! labeling of whole calls.

use numcore::{softmax_xent_labels, Adam, AdamConfig, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::BowVocab;
use crate::error::{Error, Result};
use crate::metrics::{instance_prf, segments, timestep_prf, PrfReport, STEP_SECONDS};
use crate::model::Classifier;
use crate::synthdata::{decode_words, SyntheticCall, TimedWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowConfig {
    /// Features kept per n-gram group.
    pub per_group: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Sliding window length in seconds.
    pub window_s: f64,
    pub seed: u64,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            per_group: 500,
            hidden: vec![256, 256, 256],
            dropout: 0.3,
            l2: 0.05,
            lr: 1e-3,
            epochs: 30,
            batch_size: 32,
            window_s: 6.0,
            seed: 0,
        }
    }
}

impl BowConfig {
    /// l2 scaled like the desk MultiQT profile.
    pub fn desk() -> Self {
        Self {
            l2: 5e-5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(3.0..=9.0).contains(&self.window_s) {
            return Err(Error::Config(format!("window_s must be in [3, 9], got {}", self.window_s)));
        }
        if self.batch_size == 0 || self.per_group == 0 || self.hidden.is_empty() {
            return Err(Error::Config("batch_size, per_group and hidden must be non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Dense trunk and softmax head, the same classifier MultiQT uses after fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Fnn {
    pub classifier: Classifier<f32>,
}

fn stack(rows: &[&[f32]], cols: usize) -> Tensor<f32> {
    let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new(vec![rows.len(), cols], data).expect("rectangular rows")
}

impl Fnn {
    /// Mini-batch Adam on mean cross-entropy plus `l2 * 0.5 * ||theta||^2`.
    pub fn train(x: &[Vec<f32>], y: &[usize], classes: usize, cfg: &BowConfig) -> Result<Self> {
        cfg.validate()?;
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Input(format!("{} feature rows for {} labels", x.len(), y.len())));
        }
        let dim = x[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut classifier = Classifier::init(dim, &cfg.hidden, classes, false, cfg.dropout, 0.99, 1e-5, &mut rng);
        let mut adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        let mut order: Vec<usize> = (0..x.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let rows: Vec<&[f32]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
                let labels: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                let (outs, tape) = classifier.forward_train(vec![stack(&rows, dim)], &mut rng)?;
                let xent = softmax_xent_labels(&outs[0].0, &labels)?;
                let (_, grads) = classifier.backward(&tape, &[(xent.grad_logits, None)], false)?;
                let mut flat = Vec::new();
                grads.push_into(&mut flat);
                let mut params: Vec<&mut Tensor<f32>> = Vec::new();
                classifier.visit_mut("", &mut |_, t, trainable| {
                    if trainable {
                        params.push(t)
                    }
                });
                if cfg.l2 != 0.0 {
                    for (g, p) in flat.iter_mut().zip(&params) {
                        for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
                            *gv += cfg.l2 as f32 * *pv;
                        }
                    }
                }
                adam.step(&mut params, &flat)?;
                classifier.update_running(&tape);
            }
        }
        Ok(Self { classifier })
    }

    pub fn predict(&self, x: &[Vec<f32>]) -> Result<Vec<usize>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<&[f32]> = x.iter().map(|r| r.as_slice()).collect();
        let (logits, _) = self.classifier.forward_infer(&stack(&rows, x[0].len()))?;
        Ok(logits.argmax_rows())
    }
}

/// Words whose midpoint lies in `[t0, t1)` seconds, joined by spaces.
fn text_between(words: &[TimedWord], t0: f64, t1: f64) -> String {
    words
        .iter()
        .filter(|w| {
            let m = 0.5 * (w.start + w.stop);
            m >= t0 && m < t1
        })
        .map(|w| w.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Training windows: every maximal constant-label run of the gold sequence,
/// cut into pieces of at most `window_s`, with the transcript words inside.
/// Pieces without words are skipped.
pub fn training_documents(words: &[TimedWord], labels: &[usize], window_s: f64) -> Vec<(String, usize)> {
    let per = ((window_s / STEP_SECONDS).round() as usize).max(1);
    let mut out = Vec::new();
    for seg in segments(labels) {
        let mut s = seg.start;
        while s < seg.stop {
            let e = (s + per).min(seg.stop);
            let text = text_between(words, s as f64 * STEP_SECONDS, e as f64 * STEP_SECONDS);
            if !text.is_empty() {
                out.push((text, seg.label));
            }
            s = e;
        }
    }
    out
}

/// Window starting at each word: that word and every later word starting
/// less than `window_s` after it. Returns (first, last) word indices.
pub fn sliding_windows(words: &[TimedWord], window_s: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(words.len());
    let mut j = 0;
    for i in 0..words.len() {
        j = j.max(i);
        while j + 1 < words.len() && words[j + 1].start < words[i].start + window_s {
            j += 1;
        }
        out.push((i, j));
    }
    out
}

/// Label `steps` output steps from per-window classes: each window votes for
/// the steps overlapping `[first.start, last.stop)`; a step takes the class
/// with the most votes, ties and uncovered steps get None.
pub fn vote_steps(words: &[TimedWord], windows: &[(usize, usize)], classes_per_window: &[usize], classes: usize, steps: usize) -> Vec<usize> {
    let mut votes = vec![vec![0u32; classes]; steps];
    for (&(i, j), &c) in windows.iter().zip(classes_per_window) {
        let s0 = (words[i].start / STEP_SECONDS).floor().max(0.0) as usize;
        let s1 = ((words[j].stop / STEP_SECONDS).ceil() as usize).min(steps);
        for v in votes.iter_mut().take(s1).skip(s0) {
            v[c] += 1;
        }
    }
    votes
        .iter()
        .map(|v| {
            let best = *v.iter().max().unwrap_or(&0);
            if best == 0 {
                return 0;
            }
            let mut winners = v.iter().enumerate().filter(|(_, &n)| n == best);
            let first = winners.next().map(|(c, _)| c).unwrap_or(0);
            if winners.next().is_some() {
                0
            } else {
                first
            }
        })
        .collect()
}

/// Vocabulary plus classifier, trained on the transcripts of whole calls.
#[derive(Debug, Clone, PartialEq)]
pub struct BowModel {
    pub vocab: BowVocab,
    pub fnn: Fnn,
    pub classes: usize,
    pub window_s: f64,
}

impl BowModel {
    pub fn train(calls: &[&SyntheticCall], classes: usize, cfg: &BowConfig) -> Result<Self> {
        cfg.validate()?;
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for c in calls {
            for (t, l) in training_documents(&decode_words(&c.text), &c.labels, cfg.window_s) {
                texts.push(t);
                labels.push(l);
            }
        }
        let vocab = BowVocab::build(&texts, &labels, classes, cfg.per_group)?;
        let x: Vec<Vec<f32>> = texts.iter().map(|t| vocab.featurize(t)).collect();
        let fnn = Fnn::train(&x, &labels, classes, cfg)?;
        Ok(Self {
            vocab,
            fnn,
            classes,
            window_s: cfg.window_s,
        })
    }

    /// Step labels for a call transcript of `steps` output steps.
    pub fn label_call(&self, words: &[TimedWord], steps: usize) -> Result<Vec<usize>> {
        let windows = sliding_windows(words, self.window_s);
        let x: Vec<Vec<f32>> = windows
            .iter()
            .map(|&(i, j)| {
                let t: Vec<&str> = words[i..=j].iter().map(|w| w.text.as_str()).collect();
                self.vocab.featurize(&t.join(" "))
            })
            .collect();
        let pred = self.fnn.predict(&x)?;
        Ok(vote_steps(words, &windows, &pred, self.classes, steps))
    }

    pub fn evaluate(&self, calls: &[&SyntheticCall]) -> Result<(PrfReport, PrfReport)> {
        let mut pred = Vec::with_capacity(calls.len());
        for c in calls {
            pred.push(self.label_call(&decode_words(&c.text), c.labels.len())?);
        }
        let gold: Vec<Vec<usize>> = calls.iter().map(|c| c.labels.clone()).collect();
        Ok((
            timestep_prf(&pred, &gold, self.classes)?,
            instance_prf(&pred, &gold, self.classes)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(text: &str, start: f64, stop: f64) -> TimedWord {
        TimedWord {
            text: text.into(),
            start,
            stop,
        }
    }

    #[test]
    fn windows_advance_one_word() {
        let words = vec![w("a", 0.0, 0.2), w("b", 1.0, 1.2), w("c", 3.5, 3.7), w("d", 9.0, 9.1)];
        assert_eq!(sliding_windows(&words, 3.0), vec![(0, 1), (1, 2), (2, 2), (3, 3)]);
        assert!(sliding_windows(&[], 6.0).is_empty());
    }

    #[test]
    fn isolated_keyword_window_labels_its_steps() {
        let words = vec![w("breathing", 0.8, 1.6)];
        let windows = sliding_windows(&words, 6.0);
        let y = vote_steps(&words, &windows, &[4], 6, 30);
        let expect: Vec<usize> = (0..30).map(|t| if (10..20).contains(&t) { 4 } else { 0 }).collect();
        assert_eq!(y, expect);
        assert_eq!(vote_steps(&[], &[], &[], 6, 12), vec![0; 12]);
    }

    #[test]
    fn vote_ties_go_to_none() {
        let words = vec![w("a", 0.0, 0.4), w("b", 0.0, 0.4)];
        let y = vote_steps(&words, &[(0, 0), (1, 1)], &[2, 3], 6, 5);
        assert_eq!(y, vec![0; 5]);
    }

    #[test]
    fn training_documents_follow_constant_label_runs() {
        let words = vec![w("is", 0.0, 0.1), w("he", 0.2, 0.3), w("ok", 1.0, 1.1)];
        let labels = [4, 4, 4, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let docs = training_documents(&words, &labels, 6.0);
        assert_eq!(docs, vec![("is he".to_string(), 4), ("ok".to_string(), 0)]);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let cfg = BowConfig {
            hidden: vec![16],
            epochs: 60,
            batch_size: 4,
            l2: 0.0,
            dropout: 0.0,
            ..BowConfig::default()
        };
        let x: Vec<Vec<f32>> = (0..24).map(|i| {
            let mut v = vec![0.0; 3];
            v[i % 3] = 1.0;
            v
        }).collect();
        let y: Vec<usize> = (0..24).map(|i| i % 3).collect();
        let f = Fnn::train(&x, &y, 3, &cfg).unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
        assert_eq!(Fnn::train(&x, &y, 3, &cfg).unwrap(), f);
    }
}
