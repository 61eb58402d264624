use serde::{Deserialize, Serialize};

use super::prf::{f1, ratio};
use super::{check_pairs, segments, Segment, MIN_INSTANCE_STEPS, STEP_SECONDS};
use crate::error::{Error, Result};

/// `counts[gold][pred]` pooled over calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn errors(&self) -> usize {
        self.off_diagonal(|_, _| true)
    }

    fn off_diagonal(&self, keep: impl Fn(usize, usize) -> bool) -> usize {
        let mut n = 0;
        for (g, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if g != p && keep(g, p) {
                    n += c;
                }
            }
        }
        n
    }

    /// Fraction of wrong steps where one question class was taken for another.
    pub fn question_to_question_share(&self) -> f64 {
        ratio(self.off_diagonal(|g, p| g > 0 && p > 0), self.errors())
    }

    /// Fraction of wrong steps that are missed questions (gold question, predicted None).
    pub fn missed_share(&self) -> f64 {
        ratio(self.off_diagonal(|g, p| g > 0 && p == 0), self.errors())
    }

    /// Fraction of wrong steps that are spurious questions (gold None).
    pub fn spurious_share(&self) -> f64 {
        ratio(self.off_diagonal(|g, _| g == 0), self.errors())
    }
}

pub fn confusion(pred: &[Vec<usize>], gold: &[Vec<usize>], classes: usize) -> Result<Confusion> {
    check_pairs(pred, gold, classes)?;
    let mut counts = vec![vec![0usize; classes]; classes];
    for (p, g) in pred.iter().zip(gold) {
        for (&a, &b) in p.iter().zip(g) {
            counts[b][a] += 1;
        }
    }
    Ok(Confusion { counts })
}

/// Signed boundary errors in seconds of found instances. Positive values
/// mean the prediction extends outside the gold segment on that side.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarginStats {
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
}

fn summary(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    let median = if s.len().is_multiple_of(2) { (s[mid - 1] + s[mid]) / 2.0 } else { s[mid] };
    (mean, median)
}

impl MarginStats {
    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    /// `(mean, median)` of the start errors.
    pub fn start_summary(&self) -> (f64, f64) {
        summary(&self.start)
    }

    /// `(mean, median)` of the stop errors.
    pub fn stop_summary(&self) -> (f64, f64) {
        summary(&self.stop)
    }
}

/// For every gold question segment credited by the instance rule, the
/// predicted run of the same label overlapping it most (earliest on ties)
/// gives one start and one stop error.
pub fn margin_stats(pred: &[Vec<usize>], gold: &[Vec<usize>], classes: usize) -> Result<MarginStats> {
    check_pairs(pred, gold, classes)?;
    let mut out = MarginStats::default();
    for (p, g) in pred.iter().zip(gold) {
        let runs: Vec<Segment> = segments(p).into_iter().filter(|r| r.label != 0).collect();
        for s in segments(g).into_iter().filter(|s| s.label != 0) {
            let mut best: Option<&Segment> = None;
            for r in runs.iter().filter(|r| r.label == s.label) {
                if best.is_none_or(|b| r.overlap(&s) > b.overlap(&s)) {
                    best = Some(r);
                }
            }
            if let Some(r) = best.filter(|r| r.overlap(&s) >= MIN_INSTANCE_STEPS) {
                out.start.push((s.start as f64 - r.start as f64) * STEP_SECONDS);
                out.stop.push((r.stop as f64 - s.stop as f64) * STEP_SECONDS);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBin {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Exclusive upper edge (the last bin also takes values equal to it).
    pub hi: f64,
    pub calls: usize,
    pub precision: f64,
    pub recall: f64,
    /// Micro F1 over question classes, class 0 excluded.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBinReport {
    pub bins: Vec<NoiseBin>,
    pub notes: Vec<String>,
}

/// Bin calls by corruption level using `edges` (`n + 1` increasing values
/// for `n` half-open bins) and score each bin.
pub fn eval_by_noise_bin(
    levels: &[f64],
    pred: &[Vec<usize>],
    gold: &[Vec<usize>],
    classes: usize,
    edges: &[f64],
) -> Result<NoiseBinReport> {
    check_pairs(pred, gold, classes)?;
    if levels.len() != pred.len() {
        return Err(Error::Input(format!("{} levels for {} calls", levels.len(), pred.len())));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("bin edges must be at least two increasing values".into()));
    }
    let nb = edges.len() - 1;
    let mut report = NoiseBinReport {
        bins: Vec::new(),
        notes: Vec::new(),
    };
    for b in 0..nb {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let last = b + 1 == nb;
        let members: Vec<usize> = (0..levels.len())
            .filter(|&i| levels[i] >= lo && (levels[i] < hi || (last && levels[i] == hi)))
            .collect();
        if members.is_empty() {
            report.notes.push(format!("bin [{lo}, {hi}) has no calls; omitted"));
            continue;
        }
        let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
        for &i in &members {
            for (&a, &g) in pred[i].iter().zip(&gold[i]) {
                n_pred += usize::from(a != 0);
                n_gold += usize::from(g != 0);
                tp += usize::from(a != 0 && a == g);
            }
        }
        let precision = ratio(tp, n_pred);
        let recall = ratio(tp, n_gold);
        report.bins.push(NoiseBin {
            lo,
            hi,
            calls: members.len(),
            precision,
            recall,
            f1: f1(precision, recall),
        });
    }
    let outside = levels.iter().filter(|&&l| l < edges[0] || l > edges[nb]).count();
    if outside > 0 {
        report.notes.push(format!("{outside} calls fall outside the bin edges"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_shapes() {
        let g = vec![vec![0, 1, 2, 2]];
        let c = confusion(&g, &g, 3).unwrap();
        assert_eq!(c.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        let none = confusion(&[vec![0; 4]], &g, 3).unwrap();
        for row in &none.counts {
            assert!(row[1..].iter().all(|&v| v == 0));
        }
        assert_eq!(none.missed_share(), 1.0);
    }

    #[test]
    fn margins_exact_and_one_step_wider() {
        let mut g = vec![0; 20];
        g[5..12].fill(3);
        let m = margin_stats(&[g.clone()], &[g.clone()], 6).unwrap();
        assert_eq!((m.start.clone(), m.stop.clone()), (vec![0.0], vec![0.0]));
        let mut p = vec![0; 20];
        p[4..13].fill(3);
        let m = margin_stats(&[p], &[g], 6).unwrap();
        assert!((m.start[0] - 0.08).abs() < 1e-12 && (m.stop[0] - 0.08).abs() < 1e-12);
    }

    #[test]
    fn noise_bins_half_open_and_empty_omitted() {
        let g = vec![vec![0, 1, 1], vec![0, 1, 1], vec![2, 2, 0]];
        let p = vec![vec![0, 1, 1], vec![0, 0, 0], vec![2, 2, 0]];
        let r = eval_by_noise_bin(&[0.0, 0.2, 0.4], &p, &g, 3, &[0.0, 0.2, 0.3, 0.4]).unwrap();
        // 0.2 belongs to [0.2, 0.3), 0.4 to the closed last bin
        assert_eq!(r.bins.len(), 3);
        assert_eq!(r.bins[0].f1, 1.0);
        assert_eq!(r.bins[1].f1, 0.0);
        let r = eval_by_noise_bin(&[0.0, 0.05, 0.4], &p, &g, 3, &[0.0, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(r.bins.len(), 2);
        assert_eq!(r.notes.len(), 1);
    }
}
