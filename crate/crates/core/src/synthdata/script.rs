//! Latent event list of a call: who says what, when, and which spans carry
//! a tracked label.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson};

use super::config::{GenConfig, Task};
use super::lexicon::*;
use crate::error::{Error, Result};
use crate::train::Span;

/// Number of audio topic templates: 1..=5 are the tracked classes, the rest
/// belong to unrelated talk.
pub const TOPICS: usize = 10;
const OFF_TOPIC: std::ops::Range<usize> = 6..TOPICS;
const WORD_GAP_S: f64 = 0.04;
const MIN_SILENCE_S: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    Taker,
    Caller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Tracked call-taker question.
    Question,
    /// Statement reusing a class's words.
    Statement,
    /// Question outside the tracked classes.
    OtherQuestion,
    Filler,
    /// Utterance containing a tracked symptom phrase.
    Symptom,
}

impl Kind {
    fn code(self) -> &'static str {
        match self {
            Kind::Question => "question",
            Kind::Statement => "statement",
            Kind::OtherQuestion => "other_question",
            Kind::Filler => "filler",
            Kind::Symptom => "symptom",
        }
    }

    fn from_code(s: &str) -> Option<Self> {
        Some(match s {
            "question" => Kind::Question,
            "statement" => Kind::Statement,
            "other_question" => Kind::OtherQuestion,
            "filler" => Kind::Filler,
            "symptom" => Kind::Symptom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub text: String,
    pub start: f64,
    pub stop: f64,
    /// Audio topic template sounding during the word; 0 = none.
    pub topic: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub kind: Kind,
    pub speaker: Speaker,
    /// Rising pitch contour (questions).
    pub rising: bool,
    /// Tracked class, 0 when unlabeled.
    pub label: usize,
    /// Labeled time span in seconds, when `label != 0`.
    pub label_span: Option<(f64, f64)>,
    pub words: Vec<Word>,
}

impl Utterance {
    pub fn start(&self) -> f64 {
        self.words.first().map_or(0.0, |w| w.start)
    }

    pub fn stop(&self) -> f64 {
        self.words.last().map_or(0.0, |w| w.stop)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub duration: f64,
    pub utterances: Vec<Utterance>,
}

/// Draft of an utterance before it is placed on the timeline.
struct Draft {
    kind: Kind,
    speaker: Speaker,
    rising: bool,
    label: usize,
    /// Words with their topic and whether they belong to the labeled span.
    words: Vec<(String, usize, bool)>,
    /// Duration multiplier applied to every word.
    rate: f64,
}

fn word_duration(w: &str) -> f64 {
    0.06 * w.len() as f64 + 0.08
}

fn min_word_duration(w: &str) -> f64 {
    // two text frames (20 ms each) per character keeps spikes separable
    0.045 * w.len() as f64
}

fn weighted_class(weights: &[f64; 5], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i + 1;
        }
        u -= w;
    }
    5
}

fn words_of(text: &str, topic: usize, labeled: bool) -> Vec<(String, usize, bool)> {
    text.split_whitespace().map(|w| (w.to_string(), topic, labeled)).collect()
}

impl Draft {
    fn natural_length(&self) -> f64 {
        let n = self.words.len() as f64;
        self.words.iter().map(|(w, _, _)| word_duration(w)).sum::<f64>() * self.rate + WORD_GAP_S * (n - 1.0)
    }

    /// Scale the speaking rate so the utterance lasts within `[lo, hi]` seconds.
    fn fit_length(&mut self, lo: f64, hi: f64) {
        let n = self.words.len() as f64;
        let gaps = WORD_GAP_S * (n - 1.0);
        let base: f64 = self.words.iter().map(|(w, _, _)| word_duration(w)).sum();
        let len = base * self.rate + gaps;
        if len < lo {
            self.rate = (lo - gaps) / base;
        } else if len > hi {
            self.rate = ((hi - gaps) / base).max(0.0);
        }
        let floor = self
            .words
            .iter()
            .map(|(w, _, _)| min_word_duration(w) / word_duration(w))
            .fold(0.0, f64::max);
        self.rate = self.rate.max(floor);
    }

    fn place(self, start: f64) -> Utterance {
        let mut t = start;
        let mut words = Vec::with_capacity(self.words.len());
        let mut span: Option<(f64, f64)> = None;
        for (text, topic, labeled) in self.words {
            let d = word_duration(&text) * self.rate;
            if labeled {
                span = Some(span.map_or((t, t + d), |(s, _)| (s, t + d)));
            }
            words.push(Word {
                text,
                start: t,
                stop: t + d,
                topic,
            });
            t += d + WORD_GAP_S;
        }
        Utterance {
            kind: self.kind,
            speaker: self.speaker,
            rising: self.rising,
            label: self.label,
            label_span: if self.label != 0 { span } else { None },
            words,
        }
    }
}

fn filler(rng: &mut impl Rng) -> Draft {
    let topic = rng.random_range(OFF_TOPIC);
    Draft {
        kind: Kind::Filler,
        speaker: if rng.random_bool(0.5) { Speaker::Taker } else { Speaker::Caller },
        rising: false,
        label: 0,
        words: words_of(FILLERS.choose(rng).expect("non-empty"), topic, false),
        rate: rng.random_range(0.85..1.15),
    }
}

fn other_question(rng: &mut impl Rng) -> Draft {
    Draft {
        kind: Kind::OtherQuestion,
        speaker: Speaker::Taker,
        rising: true,
        label: 0,
        words: words_of(OTHER_QUESTIONS.choose(rng).expect("non-empty"), rng.random_range(OFF_TOPIC), false),
        rate: rng.random_range(0.85..1.15),
    }
}

fn question_drafts(cfg: &GenConfig, n_pos: usize, n_dis: usize, rng: &mut impl Rng) -> Vec<Draft> {
    let mut out = Vec::new();
    for _ in 0..n_pos {
        let c = weighted_class(&QUESTION_WEIGHTS, rng);
        let mut d = Draft {
            kind: Kind::Question,
            speaker: Speaker::Taker,
            rising: true,
            label: c,
            words: words_of(QUESTIONS[c].choose(rng).expect("non-empty"), c, true),
            rate: rng.random_range(0.85..1.15),
        };
        d.fit_length(cfg.question_min_s, cfg.question_max_s);
        out.push(d);
    }
    for _ in 0..n_dis {
        if rng.random_bool(0.5) {
            let c = weighted_class(&QUESTION_WEIGHTS, rng);
            out.push(Draft {
                kind: Kind::Statement,
                speaker: if rng.random_bool(0.7) { Speaker::Caller } else { Speaker::Taker },
                rising: false,
                label: 0,
                words: words_of(STATEMENTS[c].choose(rng).expect("non-empty"), c, false),
                rate: rng.random_range(0.85..1.15),
            });
        } else {
            out.push(other_question(rng));
        }
    }
    out
}

fn symptom_drafts(n_pos: usize, n_dis: usize, rng: &mut impl Rng) -> Vec<Draft> {
    let mut out = Vec::new();
    for _ in 0..n_pos {
        let c = weighted_class(&SYMPTOM_WEIGHTS, rng);
        let phrase = SYMPTOM_PHRASES[c].choose(rng).expect("non-empty");
        let frame = SYMPTOM_FRAMES.choose(rng).expect("non-empty");
        let (pre, post) = frame.split_once("{}").expect("frame has a slot");
        let mut words = words_of(pre, 0, false);
        words.extend(words_of(phrase, c, true));
        words.extend(words_of(post, 0, false));
        let asks = pre.starts_with("is ");
        out.push(Draft {
            kind: Kind::Symptom,
            speaker: if asks { Speaker::Taker } else { Speaker::Caller },
            rising: asks,
            label: c,
            words,
            rate: rng.random_range(0.85..1.15),
        });
    }
    for _ in 0..n_dis {
        if rng.random_bool(0.5) {
            // tracked-question wording is ordinary talk in this task
            let c = weighted_class(&QUESTION_WEIGHTS, rng);
            out.push(Draft {
                kind: Kind::OtherQuestion,
                speaker: Speaker::Taker,
                rising: true,
                label: 0,
                words: words_of(QUESTIONS[c].choose(rng).expect("non-empty"), rng.random_range(OFF_TOPIC), false),
                rate: rng.random_range(0.85..1.15),
            });
        } else {
            out.push(other_question(rng));
        }
    }
    out
}

/// Draw a call duration and a script filling it.
pub fn gen_script(cfg: &GenConfig, rng: &mut impl Rng) -> Result<Script> {
    cfg.validate()?;
    let normal = Normal::new(cfg.mean_duration_s, cfg.std_duration_s.max(1e-12))
        .map_err(|e| Error::Config(format!("duration distribution: {e}")))?;
    let duration = normal.sample(rng).clamp(cfg.min_duration_s, cfg.max_duration_s);
    let count = |rate: f64, rng: &mut dyn rand::RngCore| -> usize {
        let lambda = rate * duration / 60.0;
        if lambda <= 0.0 {
            0
        } else {
            Poisson::new(lambda).expect("positive rate").sample(rng) as usize
        }
    };
    let n_pos = count(cfg.positives_per_minute, rng);
    let n_dis = count(cfg.distractors_per_minute, rng);
    let mut drafts = match cfg.task {
        Task::Question => question_drafts(cfg, n_pos, n_dis, rng),
        Task::Symptom => symptom_drafts(n_pos, n_dis, rng),
    };
    // Content never takes more than 60% of the call; fillers bring speech up
    // to about that share.
    let budget = 0.6 * duration;
    let mut speech: f64 = drafts.iter().map(Draft::natural_length).sum();
    while speech > budget && !drafts.is_empty() {
        // drop from the end: distractors first, then positives
        let d = drafts.pop().expect("non-empty");
        speech -= d.natural_length();
    }
    loop {
        let f = filler(rng);
        let l = f.natural_length();
        if speech + l > budget {
            break;
        }
        speech += l;
        drafts.push(f);
    }
    // shuffle into call order
    for i in (1..drafts.len()).rev() {
        let j = rng.random_range(0..=i);
        drafts.swap(i, j);
    }
    // silences: exponential weights over the n + 1 gaps, each at least MIN_SILENCE_S
    let n_gaps = drafts.len() + 1;
    let free = (duration - speech - MIN_SILENCE_S * n_gaps as f64).max(0.0);
    let weights: Vec<f64> = (0..n_gaps).map(|_| Exp1.sample(rng)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut t = 0.0;
    let mut utterances = Vec::with_capacity(drafts.len());
    for (d, w) in drafts.into_iter().zip(&weights) {
        t += MIN_SILENCE_S + free * w / wsum;
        let u = d.place(t);
        t = u.stop();
        utterances.push(u);
    }
    let duration = duration.max(t + MIN_SILENCE_S);
    Ok(Script { duration, utterances })
}

impl Script {
    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.utterances.iter().flat_map(|u| u.words.iter())
    }

    /// All words joined by single spaces.
    pub fn text(&self) -> String {
        self.words().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn spans(&self) -> Vec<Span> {
        self.utterances
            .iter()
            .filter_map(|u| {
                u.label_span.map(|(start, stop)| Span {
                    label: u.label,
                    start,
                    stop,
                })
            })
            .collect()
    }

    pub fn positives(&self) -> usize {
        self.utterances.iter().filter(|u| u.label != 0).count()
    }

    /// One line per utterance: `kind speaker rising label span_start span_stop`
    /// followed by `word@start@stop@topic` tokens, tab separated.
    pub fn serialize(&self) -> String {
        let mut s = format!("duration\t{}\n", self.duration);
        for u in &self.utterances {
            let (ls, le) = u.label_span.unwrap_or((0.0, 0.0));
            s += &format!(
                "{}\t{}\t{}\t{}\t{}\t{}",
                u.kind.code(),
                match u.speaker {
                    Speaker::Taker => "taker",
                    Speaker::Caller => "caller",
                },
                u8::from(u.rising),
                u.label,
                ls,
                le
            );
            for w in &u.words {
                s += &format!("\t{}@{}@{}@{}", w.text, w.start, w.stop, w.topic);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, m: &str| Error::format("script", format!("line {}: {m}", line + 1));
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| err(0, "empty script"))?;
        let duration = first
            .strip_prefix("duration\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(0, "expected duration"))?;
        let mut utterances = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 7 {
                return Err(err(i, "too few fields"));
            }
            let kind = Kind::from_code(f[0]).ok_or_else(|| err(i, "unknown kind"))?;
            let speaker = match f[1] {
                "taker" => Speaker::Taker,
                "caller" => Speaker::Caller,
                _ => return Err(err(i, "unknown speaker")),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(i, "bad number"));
            let label: usize = f[3].parse().map_err(|_| err(i, "bad label"))?;
            let (ls, le) = (num(f[4])?, num(f[5])?);
            let mut words = Vec::new();
            for tok in &f[6..] {
                let p: Vec<&str> = tok.split('@').collect();
                if p.len() != 4 {
                    return Err(err(i, "bad word token"));
                }
                words.push(Word {
                    text: p[0].to_string(),
                    start: num(p[1])?,
                    stop: num(p[2])?,
                    topic: p[3].parse().map_err(|_| err(i, "bad topic"))?,
                });
            }
            utterances.push(Utterance {
                kind,
                speaker,
                rising: f[2] == "1",
                label,
                label_span: (label != 0).then_some((ls, le)),
                words,
            });
        }
        Ok(Self { duration, utterances })
    }
}
