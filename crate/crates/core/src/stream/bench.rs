use std::time::Instant;

use numcore::Tensor;
use serde::{Deserialize, Serialize};

use super::Batcher;
use crate::error::{Error, Result};
use crate::model::MultiQt;
use crate::synthdata::{gen_call, GenConfig};

/// Audio frames per second of the model input.
pub const FRAMES_PER_SECOND: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl Latency {
    /// Nearest-rank percentiles of per-chunk wall times.
    pub fn from_samples(ms: &[f64]) -> Self {
        let mut v = ms.to_vec();
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if v.is_empty() {
                0.0
            } else {
                v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]
            }
        };
        Self {
            p50_ms: pick(0.5),
            p90_ms: pick(0.9),
            p99_ms: pick(0.99),
            max_ms: pick(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    /// Audio processed, summed over streams.
    pub audio_seconds: f64,
    pub wall_seconds: f64,
    /// `audio_seconds / wall_seconds`.
    pub rtf: f64,
    pub chunk_seconds: f64,
    pub n_streams: usize,
    /// Threads available to the batcher.
    pub threads: usize,
    /// Wall time of each tick (one chunk for every stream).
    pub latency: Latency,
}

impl RtfReport {
    pub fn table(&self) -> String {
        format!(
            "streams {:>3}  chunk {:>5.2}s  audio {:>8.1}s  wall {:>8.3}s  RTF {:>8.1}  \
             latency p50 {:.2} ms  p90 {:.2} ms  p99 {:.2} ms  max {:.2} ms  ({} threads)",
            self.n_streams,
            self.chunk_seconds,
            self.audio_seconds,
            self.wall_seconds,
            self.rtf,
            self.latency.p50_ms,
            self.latency.p90_ms,
            self.latency.p99_ms,
            self.latency.max_ms,
            self.threads
        )
    }

    /// One `key=value` line for scripts.
    pub fn machine_line(&self) -> String {
        format!(
            "rtf_report audio_seconds={} wall_seconds={} rtf={} chunk_seconds={} n_streams={} threads={} \
             p50_ms={} p90_ms={} p99_ms={} max_ms={}",
            self.audio_seconds,
            self.wall_seconds,
            self.rtf,
            self.chunk_seconds,
            self.n_streams,
            self.threads,
            self.latency.p50_ms,
            self.latency.p90_ms,
            self.latency.p99_ms,
            self.latency.max_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub audio_seconds: f64,
    /// Mean wall time of one full-call forward pass.
    pub wall_seconds: f64,
    pub rtf: f64,
    pub repeats: usize,
}

impl OfflineReport {
    pub fn machine_line(&self) -> String {
        format!(
            "offline_report audio_seconds={} wall_seconds={} rtf={} repeats={}",
            self.audio_seconds, self.wall_seconds, self.rtf, self.repeats
        )
    }
}

/// A synthetic question call of exactly `duration_s` seconds (rounded to
/// whole output steps) as model input.
pub fn bench_call(duration_s: f64, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let cfg = GenConfig {
        mean_duration_s: duration_s,
        std_duration_s: 0.0,
        min_duration_s: duration_s,
        max_duration_s: duration_s,
        question_max_s: GenConfig::default().question_max_s.min(duration_s),
        question_min_s: GenConfig::default().question_min_s.min(duration_s),
        seed,
        ..GenConfig::default()
    };
    let c = gen_call(&cfg, 0)?;
    Ok((c.audio, c.text))
}

/// Stream `n_streams` copies of a call in chunks of `chunk_s` seconds,
/// one batcher tick per chunk, and time every tick including chunk slicing.
pub fn bench_rtf(
    model: &MultiQt<f32>,
    audio: &Tensor<f32>,
    text: &Tensor<f32>,
    chunk_s: f64,
    n_streams: usize,
) -> Result<RtfReport> {
    model.check_inputs(audio, text)?;
    let chunk = ((chunk_s * FRAMES_PER_SECOND as f64).round() as usize).next_multiple_of(2);
    if chunk == 0 || n_streams == 0 {
        return Err(Error::Config("chunk length and stream count must be positive".into()));
    }
    let mut batcher = Batcher::new(model, n_streams);
    let mut ticks = Vec::new();
    let start = Instant::now();
    let mut pos = 0;
    while pos < audio.rows() {
        let t0 = Instant::now();
        let end = (pos + chunk).min(audio.rows());
        let a = audio.slice_rows(pos, end);
        let s = text.slice_rows(pos / 2, end / 2);
        let chunks: Vec<_> = (0..n_streams).map(|_| Some((&a, &s))).collect();
        batcher.tick(&chunks)?;
        ticks.push(t0.elapsed().as_secs_f64() * 1e3);
        pos = end;
    }
    batcher.finalize()?;
    let wall = start.elapsed().as_secs_f64();
    let audio_seconds = (audio.rows() * n_streams) as f64 / FRAMES_PER_SECOND as f64;
    Ok(RtfReport {
        audio_seconds,
        wall_seconds: wall,
        rtf: audio_seconds / wall,
        chunk_seconds: chunk as f64 / FRAMES_PER_SECOND as f64,
        n_streams,
        threads: rayon::current_num_threads(),
        latency: Latency::from_samples(&ticks),
    })
}

/// Mean time of `repeats` whole-call inference passes.
pub fn bench_offline(model: &MultiQt<f32>, audio: &Tensor<f32>, text: &Tensor<f32>, repeats: usize) -> Result<OfflineReport> {
    let repeats = repeats.max(1);
    model.forward(audio, text)?;
    let start = Instant::now();
    for _ in 0..repeats {
        model.forward(audio, text)?;
    }
    let wall = start.elapsed().as_secs_f64() / repeats as f64;
    let audio_seconds = audio.rows() as f64 / FRAMES_PER_SECOND as f64;
    Ok(OfflineReport {
        audio_seconds,
        wall_seconds: wall,
        rtf: audio_seconds / wall,
        repeats,
    })
}
