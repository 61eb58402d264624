use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Coefficient on `0.5 * ||theta||^2` over all trainable tensors.
    pub l2: f64,
    /// Weight of the binary loss; only used when the model has a binary head.
    pub multitask_beta: f64,
    /// Probability of permuting an example's audio time axis.
    pub p_a: f64,
    /// Probability of permuting an example's text time axis.
    pub p_s: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 6,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            l2: 0.1,
            multitask_beta: 0.5,
            p_a: 0.0,
            p_s: 0.0,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the desk-size experiments: fewer, larger steps and an l2
    /// coefficient scaled to the smaller network.
    pub fn desk() -> Self {
        Self {
            lr: 1e-3,
            l2: 1e-4,
            epochs: 60,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, v) in [
            ("multitask_beta", self.multitask_beta),
            ("p_a", self.p_a),
            ("p_s", self.p_s),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if self.l2 < 0.0 || self.adam_eps <= 0.0 {
            return bad("l2 must be >= 0 and adam_eps > 0".into());
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "multitask_beta" => self.multitask_beta = num(key, value)?,
            "p_a" => self.p_a = num(key, value)?,
            "p_s" => self.p_s = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    /// Errors name the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().parse_over(text)
    }

    /// Apply `key = value` lines over `self`; errors cite the line.
    pub fn parse_over(self, text: &str) -> Result<Self> {
        let mut cfg = self;
        for (key, value, line) in parse_kv(text)? {
            cfg.set(&key, &value)
                .map_err(|e| Error::Config(format!("line {line}: {}", strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Split `key = value` lines, skipping blanks and `#` comments.
/// Returns `(key, value, 1-based line number)`.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", i + 1)));
        }
        out.push((k.to_string(), v.to_string(), i + 1));
    }
    Ok(out)
}
