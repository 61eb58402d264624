use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Call-taker questions of five classes.
    Question,
    /// Symptom keyword phrases of five classes.
    Symptom,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "question" => Ok(Task::Question),
            "symptom" => Ok(Task::Symptom),
            _ => Err(Error::Config(format!("unknown task `{s}` (question|symptom)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub task: Task,
    pub n_calls: usize,
    pub mean_duration_s: f64,
    pub std_duration_s: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Expected tracked positives (questions or symptom mentions) per minute.
    pub positives_per_minute: f64,
    /// Unlabeled questions and keyword statements per minute each.
    pub distractors_per_minute: f64,
    /// Duration range of a tracked question.
    pub question_min_s: f64,
    pub question_max_s: f64,
    /// Frame noise standard deviation of the audio features.
    pub sigma: f64,
    /// Per-utterance jitter of the audio patterns, relative to `sigma`.
    pub kappa: f64,
    /// Amplitude of the class template on the topic channels.
    pub class_amplitude: f64,
    /// Per-utterance random offset on the topic channels, in units of
    /// `kappa * sigma * class_amplitude`.
    pub topic_jitter: f64,
    /// Amplitude of the pitch contour on the intonation channels.
    pub intonation_amplitude: f64,
    /// Character corruption rate of the simulated ASR.
    pub corruption: f64,
    /// Per-call corruption is drawn uniformly from `corruption +- corruption_spread`.
    pub corruption_spread: f64,
    /// Softmax temperature of the simulated ASR output.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    /// Full-length calls with the class mix and sparsity of a real call
    /// center: about 166 s per call and roughly 2% question time.
    fn default() -> Self {
        Self {
            task: Task::Question,
            n_calls: 200,
            mean_duration_s: 166.0,
            std_duration_s: 65.0,
            min_duration_s: 30.0,
            max_duration_s: 480.0,
            positives_per_minute: 0.8,
            distractors_per_minute: 2.0,
            question_min_s: 1.0,
            question_max_s: 2.0,
            sigma: 0.5,
            kappa: 1.0,
            class_amplitude: 0.5,
            topic_jitter: 5.0,
            intonation_amplitude: 1.0,
            corruption: 0.3,
            corruption_spread: 0.0,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Short calls with dense questions, sized for CPU training runs.
    pub fn desk() -> Self {
        Self {
            mean_duration_s: 28.0,
            std_duration_s: 4.0,
            min_duration_s: 20.0,
            max_duration_s: 36.0,
            positives_per_minute: 12.0,
            distractors_per_minute: 10.0,
            ..Self::default()
        }
    }

    /// Desk-size symptom dataset.
    pub fn desk_symptom() -> Self {
        Self {
            task: Task::Symptom,
            ..Self::desk()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_calls(mut self, n: usize) -> Self {
        self.n_calls = n;
        self
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
        }
        match key {
            "task" => self.task = value.parse()?,
            "n_calls" => self.n_calls = num(key, value)?,
            "mean_duration_s" => self.mean_duration_s = num(key, value)?,
            "std_duration_s" => self.std_duration_s = num(key, value)?,
            "min_duration_s" => self.min_duration_s = num(key, value)?,
            "max_duration_s" => self.max_duration_s = num(key, value)?,
            "positives_per_minute" => self.positives_per_minute = num(key, value)?,
            "distractors_per_minute" => self.distractors_per_minute = num(key, value)?,
            "question_min_s" => self.question_min_s = num(key, value)?,
            "question_max_s" => self.question_max_s = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "class_amplitude" => self.class_amplitude = num(key, value)?,
            "topic_jitter" => self.topic_jitter = num(key, value)?,
            "intonation_amplitude" => self.intonation_amplitude = num(key, value)?,
            "corruption" => self.corruption = num(key, value)?,
            "corruption_spread" => self.corruption_spread = num(key, value)?,
            "temperature" => self.temperature = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// `key = value` lines applied over `self`; errors cite the line.
    pub fn parse_over(mut self, text: &str) -> Result<Self> {
        for (key, value, line) in crate::train::parse_kv(text)? {
            self.set(&key, &value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return bad("need 0 < min_duration_s <= max_duration_s".into());
        }
        if !(self.question_min_s > 0.0 && self.question_min_s <= self.question_max_s) {
            return bad("need 0 < question_min_s <= question_max_s".into());
        }
        if self.question_max_s > self.min_duration_s {
            return bad(format!(
                "question duration up to {} s does not fit in calls as short as {} s",
                self.question_max_s, self.min_duration_s
            ));
        }
        if !(0.0..=1.0).contains(&self.corruption) || self.corruption_spread < 0.0 {
            return bad(format!("corruption must be in [0, 1], got {}", self.corruption));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("topic_jitter", self.topic_jitter),
            ("std_duration_s", self.std_duration_s),
            ("positives_per_minute", self.positives_per_minute),
            ("distractors_per_minute", self.distractors_per_minute),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.temperature <= 0.0 {
            return bad("temperature must be > 0".into());
        }
        Ok(())
    }
}
