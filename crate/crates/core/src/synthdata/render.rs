//! Rendering a script into the two input streams.
//!
//! Audio (100 frames/s, 40 channels), a surrogate for log-mel features:
//!
//! | channels | content |
//! |----------|---------|
//! | 0..16    | speech energy with a 4 Hz syllable modulation |
//! | 16..20   | speaker identity (call-taker 16..18, caller 18..20) |
//! | 20..36   | topic template of the words being spoken |
//! | 36..40   | pitch contour, rising over questions and falling otherwise |
//!
//! plus white noise of standard deviation `sigma` everywhere. Each utterance
//! draws a gain and a per-channel topic offset scaled by `kappa * sigma`, so
//! with `sigma = 0` the patterns are exact.
//!
//! Text (50 frames/s, 29 symbols) imitates a CTC character posterior: one
//! spike per character inside its word, a space spike after each word and
//! blanks elsewhere.

use numcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::script::{Script, Speaker, TOPICS};
use crate::model::{AUDIO_FEATURES, TEXT_FEATURES};

pub const AUDIO_FPS: f64 = 100.0;
pub const TEXT_FPS: f64 = 50.0;
pub const BLANK: usize = 28;
pub const SPACE: usize = 27;
pub const APOSTROPHE: usize = 26;

const ENERGY: std::ops::Range<usize> = 0..16;
const SPEAKER: std::ops::Range<usize> = 16..20;
pub const TOPIC_CHANNELS: std::ops::Range<usize> = 20..36;
pub const PITCH_CHANNELS: std::ops::Range<usize> = 36..40;
const TEMPLATE_SEED: u64 = 0x5EED_70B1C;

pub fn symbol_index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '\'' => Some(APOSTROPHE),
        ' ' => Some(SPACE),
        _ => None,
    }
}

pub fn symbol_char(i: usize) -> Option<char> {
    match i {
        0..=25 => Some((b'a' + i as u8) as char),
        APOSTROPHE => Some('\''),
        SPACE => Some(' '),
        _ => None,
    }
}

/// Fixed +-1 patterns over the topic channels, independent of the dataset
/// seed so every dataset shares them. Row 0 is all zeros.
pub fn topic_templates() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED);
    let n = TOPIC_CHANNELS.len();
    let mut out = vec![vec![0.0; n]];
    for _ in 1..TOPICS {
        out.push((0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect());
    }
    out
}

fn spectral_shape() -> Vec<f64> {
    ENERGY.map(|c| 1.0 - 0.04 * c as f64).collect()
}

/// Audio parameters of the call.
pub struct AudioParams {
    pub sigma: f64,
    pub kappa: f64,
    pub class_amplitude: f64,
    /// Std of the per-utterance topic offset, relative to `kappa * sigma * class_amplitude`.
    pub topic_jitter: f64,
    pub intonation_amplitude: f64,
    /// Scale on the class amplitude for the symptom task.
    pub topic_scale: f64,
}

pub fn render_audio(script: &Script, frames: usize, p: &AudioParams, rng: &mut impl Rng) -> Tensor<f32> {
    let mut x = vec![0.0f64; frames * AUDIO_FEATURES];
    let templates = topic_templates();
    let shape = spectral_shape();
    let jitter = p.kappa * p.sigma;
    for u in &script.utterances {
        let gain = (1.0 + jitter * 0.3 * rng.sample::<f64, _>(StandardNormal)).max(0.2);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let offset: Vec<f64> = TOPIC_CHANNELS
            .map(|_| jitter * p.topic_jitter * p.class_amplitude * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (u0, u1) = (u.start(), u.stop());
        let spk = match u.speaker {
            Speaker::Taker => [0.8, 0.8, 0.0, 0.0],
            Speaker::Caller => [0.0, 0.0, 0.8, 0.8],
        };
        for w in &u.words {
            let f0 = (w.start * AUDIO_FPS).round() as usize;
            let f1 = ((w.stop * AUDIO_FPS).round() as usize).min(frames);
            for f in f0..f1 {
                let tau = (f as f64 + 0.5) / AUDIO_FPS;
                let row = &mut x[f * AUDIO_FEATURES..(f + 1) * AUDIO_FEATURES];
                let env = gain * (0.6 + 0.4 * (std::f64::consts::TAU * 4.0 * tau + phase).sin());
                for (c, s) in ENERGY.zip(&shape) {
                    row[c] += env * s;
                }
                for (c, s) in SPEAKER.zip(spk) {
                    row[c] += gain * s;
                }
                if w.topic != 0 {
                    let a = p.class_amplitude * p.topic_scale * gain;
                    for ((c, t), o) in TOPIC_CHANNELS.zip(&templates[w.topic]).zip(&offset) {
                        row[c] += a * t + o;
                    }
                }
                let progress = ((tau - u0) / (u1 - u0).max(1e-9)).clamp(0.0, 1.0);
                let pitch = if u.rising {
                    -0.2 + 1.2 * progress
                } else {
                    0.3 - 0.5 * progress
                };
                for c in PITCH_CHANNELS {
                    row[c] += p.intonation_amplitude * gain * pitch;
                }
            }
        }
    }
    if p.sigma > 0.0 {
        let noise = Normal::new(0.0, p.sigma).expect("positive sigma");
        for v in x.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    Tensor::new(vec![frames, AUDIO_FEATURES], x.into_iter().map(|v| v as f32).collect()).expect("shape")
}

/// Intended symbol per text frame (before corruption), `BLANK` when silent.
fn symbol_track(script: &Script, frames: usize) -> Vec<usize> {
    let mut track = vec![BLANK; frames];
    let words: Vec<_> = script.words().collect();
    for (i, w) in words.iter().enumerate() {
        let f0 = (w.start * TEXT_FPS).round() as usize;
        let f1 = ((w.stop * TEXT_FPS).round() as usize).min(frames);
        let chars: Vec<usize> = w.text.chars().filter_map(symbol_index).collect();
        let span = (f1.saturating_sub(f0)) as f64;
        for (j, &c) in chars.iter().enumerate() {
            let f = f0 + ((j as f64 + 0.5) * span / chars.len() as f64) as usize;
            if f < frames {
                track[f] = c;
            }
        }
        if i + 1 < words.len() && f1 < frames {
            track[f1] = SPACE;
        }
    }
    track
}

/// Simulated ASR output and the number of characters it corrupted.
pub struct AsrOutput {
    pub posteriors: Tensor<f32>,
    pub emitted: usize,
    pub corrupted: usize,
}

/// Render the character posterior. Each emitted symbol is independently
/// substituted by a random letter with probability `c / 2` or deleted (left
/// blank) with probability `c / 2`.
pub fn simulate_asr(script: &Script, frames: usize, corruption: f64, temperature: f64, rng: &mut impl Rng) -> AsrOutput {
    let track = symbol_track(script, frames);
    let mut data = Vec::with_capacity(frames * TEXT_FEATURES);
    let (mut emitted, mut corrupted) = (0, 0);
    let mut logits = [0.0f64; TEXT_FEATURES];
    for &sym in &track {
        for l in logits.iter_mut() {
            *l = 0.5 * rng.sample::<f64, _>(StandardNormal);
        }
        if sym == BLANK {
            logits[BLANK] += 7.0;
        } else {
            emitted += 1;
            let u: f64 = rng.random();
            if u < corruption / 2.0 {
                corrupted += 1;
                let mut s = rng.random_range(0..25);
                if s >= sym {
                    s += 1;
                }
                logits[s.min(25)] += 5.0;
                logits[BLANK] += 2.5;
            } else if u < corruption {
                corrupted += 1;
                logits[BLANK] += 5.0;
                logits[sym] += 2.5;
            } else {
                logits[sym] += 7.0;
                logits[BLANK] += 2.0;
            }
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut row = [0.0f64; TEXT_FEATURES];
        for (r, l) in row.iter_mut().zip(&logits) {
            *r = ((l - max) / temperature).exp();
            z += *r;
        }
        data.extend(row.iter().map(|r| (r / z) as f32));
    }
    AsrOutput {
        posteriors: Tensor::new(vec![frames, TEXT_FEATURES], data).expect("shape"),
        emitted,
        corrupted,
    }
}

/// A decoded symbol with the text frame it was emitted at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedChar {
    pub ch: char,
    pub frame: usize,
}

/// Greedy CTC decoding: argmax per frame, merge repeats, drop blanks.
pub fn decode_argmax(posteriors: &Tensor<f32>) -> Vec<DecodedChar> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for (f, s) in posteriors.argmax_rows().into_iter().enumerate() {
        if s != prev && s != BLANK {
            if let Some(ch) = symbol_char(s) {
                out.push(DecodedChar { ch, frame: f });
            }
        }
        prev = s;
    }
    out
}

pub fn decode_text(posteriors: &Tensor<f32>) -> String {
    let s: String = decode_argmax(posteriors).iter().map(|d| d.ch).collect();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A decoded word with its time span in seconds (first to last character frame).
#[derive(Debug, Clone, PartialEq)]
pub struct TimedWord {
    pub text: String,
    pub start: f64,
    pub stop: f64,
}

/// Words of the greedy transcript with frame-derived times.
pub fn decode_words(posteriors: &Tensor<f32>) -> Vec<TimedWord> {
    let mut out: Vec<TimedWord> = Vec::new();
    let mut cur: Option<TimedWord> = None;
    for d in decode_argmax(posteriors) {
        let t0 = d.frame as f64 / TEXT_FPS;
        if d.ch == ' ' {
            out.extend(cur.take());
            continue;
        }
        match cur.as_mut() {
            Some(w) => {
                w.text.push(d.ch);
                w.stop = t0 + 1.0 / TEXT_FPS;
            }
            None => {
                cur = Some(TimedWord {
                    text: d.ch.to_string(),
                    start: t0,
                    stop: t0 + 1.0 / TEXT_FPS,
                })
            }
        }
    }
    out.extend(cur);
    out
}

/// Levenshtein distance over characters divided by the reference length.
pub fn character_error_rate(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return if h.is_empty() { 0.0 } else { 1.0 };
    }
    let mut prev: Vec<usize> = (0..=h.len()).collect();
    let mut cur = vec![0; h.len() + 1];
    for i in 1..=r.len() {
        cur[0] = i;
        for j in 1..=h.len() {
            let sub = prev[j - 1] + usize::from(r[i - 1] != h[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[h.len()] as f64 / r.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_table_round_trips() {
        for i in 0..BLANK {
            assert_eq!(symbol_index(symbol_char(i).unwrap()), Some(i));
        }
        assert_eq!(symbol_char(BLANK), None);
    }

    #[test]
    fn cer_oracle() {
        assert_eq!(character_error_rate("abc", "abc"), 0.0);
        assert_eq!(character_error_rate("abcd", "abd"), 0.25);
        assert_eq!(character_error_rate("ab", "xyz"), 1.5);
    }

    #[test]
    fn templates_are_fixed_and_distinct() {
        let a = topic_templates();
        assert_eq!(a, topic_templates());
        for i in 1..a.len() {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
    }
}
