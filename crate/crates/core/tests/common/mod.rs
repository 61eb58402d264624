//! Brute-force metric counters and random label fixtures shared by the
//! metric tests and the acceptance suite.

use multiqt::metrics::{instance_prf, timestep_prf, PrfReport, MIN_INSTANCE_STEPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: usize = 6;
const K: usize = MIN_INSTANCE_STEPS;

/// Piecewise-constant gold sequence with mostly-None background.
pub fn gold_seq(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let len = rng.random_range(0..90);
    let mut v = Vec::with_capacity(len);
    while v.len() < len {
        let run = rng.random_range(1..15);
        let label = if rng.random_bool(0.6) { 0 } else { rng.random_range(1..CLASSES) };
        v.extend(std::iter::repeat_n(label, run));
    }
    v.truncate(len);
    v
}

/// Gold with shifted boundaries, relabeled runs and isolated flips.
pub fn noisy(gold: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p = gold.to_vec();
    let n = p.len();
    if n == 0 {
        return p;
    }
    for _ in 0..rng.random_range(0..4) {
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..12)).min(n);
        let l = rng.random_range(0..CLASSES);
        p[a..b].fill(l);
    }
    for x in p.iter_mut() {
        if rng.random_bool(0.05) {
            *x = rng.random_range(0..CLASSES);
        }
    }
    p
}

/// (start, stop) of every maximal run of `label`.
fn runs_of(seq: &[usize], label: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        if seq[i] == label {
            let j = (i..seq.len()).find(|&j| seq[j] != label).unwrap_or(seq.len());
            out.push((i, j));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
    support: usize,
    predicted: usize,
}

fn oracle_timestep(pred: &[Vec<usize>], gold: &[Vec<usize>], c: usize) -> Counts {
    let pairs = pred.iter().zip(gold).flat_map(|(p, g)| p.iter().zip(g));
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&a, &b) in pairs {
        match (a == c, b == c) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Counts {
        tp,
        fp,
        fn_,
        support: tp + fn_,
        predicted: tp + fp,
    }
}

fn oracle_instance(pred: &[Vec<usize>], gold: &[Vec<usize>], c: usize) -> Counts {
    let (mut tp, mut fp, mut support, mut predicted) = (0, 0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let gold_runs = runs_of(g, c);
        for &(a, b) in &gold_runs {
            support += 1;
            // some window of K steps inside the segment predicted as c
            if (a..b.saturating_sub(K - 1)).any(|s| p[s..s + K].iter().all(|&x| x == c)) {
                tp += 1;
            }
        }
        for (a, b) in runs_of(p, c).into_iter().filter(|(a, b)| b - a >= K) {
            predicted += 1;
            let hit = gold_runs.iter().any(|&(ga, gb)| (a..b).filter(|t| (ga..gb).contains(t)).count() >= K);
            if !hit {
                fp += 1;
            }
        }
    }
    Counts {
        tp,
        fp,
        fn_: support - tp,
        support,
        predicted,
    }
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn check(
    report: &PrfReport,
    classes: std::ops::Range<usize>,
    oracle: impl Fn(usize) -> Counts,
    precision_hits: impl Fn(&Counts) -> usize,
) -> Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let mut f1s = Vec::new();
    for c in classes {
        let o = oracle(c);
        let r = report.class(c).ok_or(format!("{} report lacks class {c}", report.metric))?;
        let got = (r.tp, r.fp, r.fn_, r.support, r.predicted);
        let want = (o.tp, o.fp, o.fn_, o.support, o.predicted);
        if got != want {
            return Err(format!("{} class {c}: counts {got:?}, oracle {want:?}", report.metric));
        }
        let p = if o.predicted == 0 { 0.0 } else { precision_hits(&o) as f64 / o.predicted as f64 };
        let rec = if o.support == 0 { 0.0 } else { o.tp as f64 / o.support as f64 };
        if !(close(r.precision, p) && close(r.recall, rec) && close(r.f1, f1_of(p, rec))) {
            return Err(format!("{} class {c}: P/R/F1 differ from oracle", report.metric));
        }
        if o.support > 0 || o.predicted > 0 {
            f1s.push(f1_of(p, rec));
        } else if !report.absent.contains(&c) {
            return Err(format!("{} class {c} should be absent", report.metric));
        }
    }
    let macro_f1 = if f1s.is_empty() { 0.0 } else { f1s.iter().sum::<f64>() / f1s.len() as f64 };
    if !close(report.macro_f1, macro_f1) {
        return Err(format!("{} macro F1 {} vs oracle {macro_f1}", report.metric, report.macro_f1));
    }
    Ok(())
}

/// Compare both metrics with the brute-force counters on `n` random fixtures;
/// `Err` describes the first disagreement.
pub fn check_fixtures(n: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let calls = rng.random_range(1..5);
        let gold: Vec<Vec<usize>> = (0..calls).map(|_| gold_seq(&mut rng)).collect();
        let pred: Vec<Vec<usize>> = gold.iter().map(|g| noisy(g, &mut rng)).collect();
        let t = timestep_prf(&pred, &gold, CLASSES).map_err(|e| e.to_string())?;
        check(&t, 0..CLASSES, |c| oracle_timestep(&pred, &gold, c), |o| o.tp).map_err(|e| format!("fixture {i}: {e}"))?;
        let r = instance_prf(&pred, &gold, CLASSES).map_err(|e| e.to_string())?;
        if r.class(0).is_some() {
            return Err(format!("fixture {i}: instance report scores class 0"));
        }
        check(&r, 1..CLASSES, |c| oracle_instance(&pred, &gold, c), |o| o.predicted - o.fp)
            .map_err(|e| format!("fixture {i}: {e}"))?;
    }
    Ok(())
}
