//! Timestep and instance precision/recall/F1, confusion counts, boundary
//! margins and corruption-binned scores over label sequences at the model
//! output rate.

mod analysis;
mod prf;

pub use analysis::{confusion, eval_by_noise_bin, margin_stats, Confusion, MarginStats, NoiseBin, NoiseBinReport};
pub use prf::{instance_prf, timestep_prf, ClassPrf, PrfReport, MIN_INSTANCE_STEPS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per output step (10 ms audio frames times total stride 8).
pub const STEP_SECONDS: f64 = 0.08;

/// Maximal run `[start, stop)` of one label, in output steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub stop: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.stop - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.stop == self.start
    }

    pub fn start_seconds(&self) -> f64 {
        self.start as f64 * STEP_SECONDS
    }

    pub fn stop_seconds(&self) -> f64 {
        self.stop as f64 * STEP_SECONDS
    }

    /// Steps shared with `other`.
    pub fn overlap(&self, other: &Segment) -> usize {
        self.stop.min(other.stop).saturating_sub(self.start.max(other.start))
    }
}

/// Split a label sequence into maximal runs.
pub fn segments(seq: &[usize]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=seq.len() {
        if i == seq.len() || seq[i] != seq[start] {
            out.push(Segment {
                label: seq[start],
                start,
                stop: i,
            });
            start = i;
        }
    }
    out
}

pub(crate) fn check_pairs(pred: &[Vec<usize>], gold: &[Vec<usize>], classes: usize) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predicted sequences for {} gold sequences",
            pred.len(),
            gold.len()
        )));
    }
    if classes < 2 {
        return Err(Error::Input(format!("need at least 2 classes, got {classes}")));
    }
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Input(format!(
                "call {i}: predicted length {} differs from gold length {}",
                p.len(),
                g.len()
            )));
        }
        if let Some(&l) = p.iter().chain(g).find(|&&l| l >= classes) {
            return Err(Error::Input(format!("call {i}: label {l} out of range for {classes} classes")));
        }
    }
    Ok(())
}
