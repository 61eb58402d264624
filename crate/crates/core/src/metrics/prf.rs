use serde::{Deserialize, Serialize};

use super::{check_pairs, segments, Segment};
use crate::error::Result;

/// Consecutive correctly labeled steps needed to credit an instance.
pub const MIN_INSTANCE_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Timestep: matching steps. Instance: gold segments found.
    pub tp: usize,
    /// Predictions (steps or runs) not matching gold.
    pub fp: usize,
    /// Gold steps or segments missed.
    pub fn_: usize,
    /// Gold support (steps or segments).
    pub support: usize,
    /// Predicted count (steps or runs).
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    /// `"timestep"` or `"instance"`.
    pub metric: String,
    pub per_class: Vec<ClassPrf>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes left out of the macro average because they have neither gold
    /// support nor predictions.
    pub absent: Vec<usize>,
}

pub(crate) fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl PrfReport {
    fn build(metric: &str, per_class: Vec<ClassPrf>) -> Self {
        let (present, absent): (Vec<&ClassPrf>, Vec<&ClassPrf>) =
            per_class.iter().partition(|c| c.support > 0 || c.predicted > 0);
        let n = present.len() as f64;
        let mean = |f: fn(&ClassPrf) -> f64| {
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|c| f(c)).sum::<f64>() / n
            }
        };
        Self {
            metric: metric.into(),
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            absent: absent.iter().map(|c| c.class).collect(),
            per_class,
        }
    }

    pub fn class(&self, class: usize) -> Option<&ClassPrf> {
        self.per_class.iter().find(|c| c.class == class)
    }

    /// Fixed-width table, one line per class plus the macro line.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<9} {:>6} {:>6} {:>6} {:>7} {:>7}\n",
            self.metric, "P", "R", "F1", "support", "pred"
        );
        for c in &self.per_class {
            s += &format!(
                "class {:<3} {:>6.3} {:>6.3} {:>6.3} {:>7} {:>7}\n",
                c.class, c.precision, c.recall, c.f1, c.support, c.predicted
            );
        }
        s += &format!(
            "{:<9} {:>6.3} {:>6.3} {:>6.3}\n",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        );
        s
    }
}

/// Per-step counts pooled over all calls, macro-averaged over all classes
/// including class 0.
pub fn timestep_prf(pred: &[Vec<usize>], gold: &[Vec<usize>], classes: usize) -> Result<PrfReport> {
    check_pairs(pred, gold, classes)?;
    let mut tp = vec![0usize; classes];
    let mut n_pred = vec![0usize; classes];
    let mut n_gold = vec![0usize; classes];
    for (p, g) in pred.iter().zip(gold) {
        for (&a, &b) in p.iter().zip(g) {
            n_pred[a] += 1;
            n_gold[b] += 1;
            if a == b {
                tp[a] += 1;
            }
        }
    }
    let per_class = (0..classes)
        .map(|c| {
            let precision = ratio(tp[c], n_pred[c]);
            let recall = ratio(tp[c], n_gold[c]);
            ClassPrf {
                class: c,
                precision,
                recall,
                f1: f1(precision, recall),
                tp: tp[c],
                fp: n_pred[c] - tp[c],
                fn_: n_gold[c] - tp[c],
                support: n_gold[c],
                predicted: n_pred[c],
            }
        })
        .collect();
    Ok(PrfReport::build("timestep", per_class))
}

/// Longest run of `pred == label` inside `seg`.
fn longest_hit(pred: &[usize], seg: &Segment) -> usize {
    let (mut best, mut cur) = (0, 0);
    for &p in &pred[seg.start..seg.stop] {
        cur = if p == seg.label { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

/// Segment-level scores over question classes `1..classes`.
///
/// A gold segment is found when at least [`MIN_INSTANCE_STEPS`] consecutive
/// steps inside it carry its label. A predicted run (maximal, at least
/// [`MIN_INSTANCE_STEPS`] long) is a false positive unless it overlaps some
/// gold segment of the same label by at least that many steps. Shorter
/// predicted runs are ignored. A mislabeled question therefore costs both a
/// false positive and a false negative.
pub fn instance_prf(pred: &[Vec<usize>], gold: &[Vec<usize>], classes: usize) -> Result<PrfReport> {
    check_pairs(pred, gold, classes)?;
    let mut found = vec![0usize; classes];
    let mut n_gold = vec![0usize; classes];
    let mut pred_hit = vec![0usize; classes];
    let mut n_pred = vec![0usize; classes];
    for (p, g) in pred.iter().zip(gold) {
        let gold_segs: Vec<Segment> = segments(g).into_iter().filter(|s| s.label != 0).collect();
        for s in &gold_segs {
            n_gold[s.label] += 1;
            if longest_hit(p, s) >= MIN_INSTANCE_STEPS {
                found[s.label] += 1;
            }
        }
        for r in segments(p) {
            if r.label == 0 || r.len() < MIN_INSTANCE_STEPS {
                continue;
            }
            n_pred[r.label] += 1;
            if gold_segs
                .iter()
                .any(|s| s.label == r.label && s.overlap(&r) >= MIN_INSTANCE_STEPS)
            {
                pred_hit[r.label] += 1;
            }
        }
    }
    let per_class = (1..classes)
        .map(|c| {
            let precision = ratio(pred_hit[c], n_pred[c]);
            let recall = ratio(found[c], n_gold[c]);
            ClassPrf {
                class: c,
                precision,
                recall,
                f1: f1(precision, recall),
                tp: found[c],
                fp: n_pred[c] - pred_hit[c],
                fn_: n_gold[c] - found[c],
                support: n_gold[c],
                predicted: n_pred[c],
            }
        })
        .collect();
    Ok(PrfReport::build("instance", per_class))
}
