//! Calls, datasets and their on-disk form.
//!
//! A dataset directory holds one `call_NNNNN.mqtd` file per call (the record
//! container shared with checkpoints, magic `MQTD`) and a `manifest.tsv`:
//!
//! ```text
//! # mqtd-manifest 1
//! # config {...GenConfig as JSON...}
//! id  file  duration_s  positives  fold  corruption
//! ```
//!
//! Call records: `audio` f32 `[T_a, 40]`, `text` f32 `[T_a/2, 29]`,
//! `labels` u32 `[T_a/8]`, `script` text. The header is the call's
//! [`CallMeta`] as JSON.

use std::path::{Path, PathBuf};

use numcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GenConfig, Task};
use super::render::{render_audio, simulate_asr, AudioParams, AUDIO_FPS};
use super::script::{gen_script, Script};
use crate::error::{Error, Result};
use crate::records::{Container, Record};
use crate::train::{labels_from_spans, Example};

pub const MAGIC: [u8; 4] = *b"MQTD";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.tsv";
pub const FOLDS: usize = 5;
/// Audio frames per output step.
pub const FRAMES_PER_STEP: usize = 8;
/// Symptom mentions carry this fraction of the question-task class amplitude.
pub const SYMPTOM_TOPIC_SCALE: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallMeta {
    pub index: usize,
    pub task: Task,
    pub seed: u64,
    pub duration_s: f64,
    pub sigma: f64,
    pub corruption: f64,
    /// Characters emitted by the simulated ASR and how many were corrupted.
    pub emitted_chars: usize,
    pub corrupted_chars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCall {
    pub meta: CallMeta,
    /// `[T_a, 40]`, `T_a` a multiple of 8.
    pub audio: Tensor<f32>,
    /// `[T_a / 2, 29]`, rows are distributions.
    pub text: Tensor<f32>,
    /// `T_a / 8` class ids.
    pub labels: Vec<usize>,
    pub script: Script,
}

impl SyntheticCall {
    pub fn id(&self) -> String {
        format!("call_{:05}", self.meta.index)
    }

    pub fn audio_seconds(&self) -> f64 {
        self.audio.rows() as f64 / AUDIO_FPS
    }

    pub fn positives(&self) -> usize {
        self.script.positives()
    }

    pub fn example(&self) -> Example<f32> {
        Example {
            audio: self.audio.clone(),
            text: self.text.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Independent random stream for call `index` of a dataset seeded `seed`.
pub fn call_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generate call `index` of the dataset described by `cfg`.
pub fn gen_call(cfg: &GenConfig, index: usize) -> Result<SyntheticCall> {
    let mut rng = call_rng(cfg.seed, index);
    let script = gen_script(cfg, &mut rng)?;
    let steps = ((script.duration * AUDIO_FPS).ceil() as usize).div_ceil(FRAMES_PER_STEP);
    let t_a = steps * FRAMES_PER_STEP;
    let corruption = if cfg.corruption_spread > 0.0 {
        let lo = (cfg.corruption - cfg.corruption_spread).max(0.0);
        let hi = (cfg.corruption + cfg.corruption_spread).min(1.0);
        rng.random_range(lo..=hi)
    } else {
        cfg.corruption
    };
    let params = AudioParams {
        sigma: cfg.sigma,
        kappa: cfg.kappa,
        class_amplitude: cfg.class_amplitude,
        topic_jitter: cfg.topic_jitter,
        intonation_amplitude: cfg.intonation_amplitude,
        topic_scale: match cfg.task {
            Task::Question => 1.0,
            Task::Symptom => SYMPTOM_TOPIC_SCALE,
        },
    };
    let audio = render_audio(&script, t_a, &params, &mut rng);
    let asr = simulate_asr(&script, t_a / 2, corruption, cfg.temperature, &mut rng);
    let labels = labels_from_spans(&script.spans(), steps);
    Ok(SyntheticCall {
        meta: CallMeta {
            index,
            task: cfg.task,
            seed: cfg.seed,
            duration_s: script.duration,
            sigma: cfg.sigma,
            corruption,
            emitted_chars: asr.emitted,
            corrupted_chars: asr.corrupted,
        },
        audio,
        text: asr.posteriors,
        labels,
        script,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    pub calls: Vec<SyntheticCall>,
    /// Fold of each call, aligned with `calls`.
    pub folds: Vec<usize>,
}

/// Generate all calls in parallel; the result does not depend on the number of threads.
pub fn gen_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let calls = (0..cfg.n_calls)
        .into_par_iter()
        .map(|i| gen_call(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let folds = assign_folds(&calls.iter().map(SyntheticCall::positives).collect::<Vec<_>>(), FOLDS);
    Ok(Dataset {
        config: cfg.clone(),
        calls,
        folds,
    })
}

/// Symptom-labeling counterpart of `cfg`: same machinery, symptom phrases as
/// positives, no intonation cue tied to the label and a weaker audio topic.
pub fn symptom_variant(cfg: &GenConfig) -> Result<Dataset> {
    gen_dataset(&GenConfig {
        task: Task::Symptom,
        ..cfg.clone()
    })
}

/// Stratify by positive count: sort calls by (count, index) and deal them
/// round-robin, so fold sizes differ by at most one.
pub fn assign_folds(counts: &[usize], folds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (counts[i], i));
    let mut out = vec![0; counts.len()];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = rank % folds;
    }
    out
}

impl Dataset {
    pub fn fold(&self, fold: usize) -> Vec<&SyntheticCall> {
        self.calls.iter().zip(&self.folds).filter(|(_, &f)| f == fold).map(|(c, _)| c).collect()
    }

    pub fn not_fold(&self, fold: usize) -> Vec<&SyntheticCall> {
        self.calls.iter().zip(&self.folds).filter(|(_, &f)| f != fold).map(|(c, _)| c).collect()
    }

    /// Pooled character error rate of the simulated ASR against the script text.
    pub fn measured_cer(&self) -> f64 {
        use super::render::{character_error_rate, decode_text};
        let (mut err, mut len) = (0.0, 0usize);
        for c in &self.calls {
            let r = c.script.text();
            err += character_error_rate(&r, &decode_text(&c.text)) * r.chars().count() as f64;
            len += r.chars().count();
        }
        if len == 0 {
            0.0
        } else {
            err / len as f64
        }
    }
}

pub fn call_to_bytes(call: &SyntheticCall) -> Result<Vec<u8>> {
    let header = serde_json::to_string(&call.meta).map_err(|e| Error::format("MQTD", e.to_string()))?;
    Ok(Container {
        magic: MAGIC,
        version: VERSION,
        header,
        records: vec![
            Record::f32("audio", call.audio.clone()),
            Record::f32("text", call.text.clone()),
            Record::u32("labels", call.labels.iter().map(|&l| l as u32).collect()),
            Record::text("script", call.script.serialize()),
        ],
    }
    .encode())
}

pub fn call_from_bytes(bytes: &[u8]) -> Result<SyntheticCall> {
    let c = Container::decode(bytes, MAGIC, &[VERSION])?;
    let meta: CallMeta =
        serde_json::from_str(&c.header).map_err(|e| Error::format("MQTD", format!("bad header: {e}")))?;
    let audio = c.f32("audio")?.clone();
    let text = c.f32("text")?.clone();
    let labels: Vec<usize> = c.u32("labels")?.iter().map(|&l| l as usize).collect();
    let script = Script::parse(c.text("script")?)?;
    if audio.rank() != 2 || text.rank() != 2 {
        return Err(Error::format("MQTD", "audio and text must be rank 2"));
    }
    if audio.rows() % FRAMES_PER_STEP != 0
        || audio.rows() != 2 * text.rows()
        || labels.len() * FRAMES_PER_STEP != audio.rows()
    {
        return Err(Error::format(
            "MQTD",
            format!(
                "inconsistent lengths: audio {}, text {}, labels {}",
                audio.rows(),
                text.rows(),
                labels.len()
            ),
        ));
    }
    Ok(SyntheticCall {
        meta,
        audio,
        text,
        labels,
        script,
    })
}

fn manifest_text(ds: &Dataset) -> Result<String> {
    let cfg = serde_json::to_string(&ds.config).map_err(|e| Error::format("manifest", e.to_string()))?;
    let mut s = format!("# mqtd-manifest {VERSION}\n# config {cfg}\nid\tfile\tduration_s\tpositives\tfold\tcorruption\n");
    for (c, f) in ds.calls.iter().zip(&ds.folds) {
        s += &format!(
            "{}\t{}.mqtd\t{}\t{}\t{}\t{}\n",
            c.id(),
            c.id(),
            c.meta.duration_s,
            c.positives(),
            f,
            c.meta.corruption
        );
    }
    Ok(s)
}

/// Write every call and the manifest into `dir` (created if needed).
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in &ds.calls {
        let p = dir.join(format!("{}.mqtd", c.id()));
        std::fs::write(&p, call_to_bytes(c)?).map_err(|e| Error::io(&p, e))?;
    }
    let p = dir.join(MANIFEST);
    std::fs::write(&p, manifest_text(ds)?).map_err(|e| Error::io(&p, e))
}

struct ManifestRow {
    id: String,
    file: String,
    duration: f64,
    positives: usize,
    fold: usize,
    corruption: f64,
}

fn parse_manifest(text: &str, path: &Path) -> Result<(GenConfig, Vec<ManifestRow>)> {
    let ctx = path.display().to_string();
    let err = |line: usize, m: &str| Error::format(&ctx, format!("line {}: {m}", line + 1));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == format!("# mqtd-manifest {VERSION}") => {}
        Some((_, l)) if l.starts_with("# mqtd-manifest ") => return Err(err(0, "unsupported manifest version")),
        _ => return Err(err(0, "not a dataset manifest")),
    }
    let config: GenConfig = match lines.next() {
        Some((i, l)) => serde_json::from_str(l.strip_prefix("# config ").ok_or_else(|| err(i, "expected config"))?)
            .map_err(|e| err(i, &format!("bad config: {e}")))?,
        None => return Err(err(1, "missing config")),
    };
    lines.next();
    let mut rows = Vec::new();
    for (i, l) in lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 6 {
            return Err(err(i, "expected 6 fields"));
        }
        rows.push(ManifestRow {
            id: f[0].to_string(),
            file: f[1].to_string(),
            duration: f[2].parse().map_err(|_| err(i, "bad duration"))?,
            positives: f[3].parse().map_err(|_| err(i, "bad positives"))?,
            fold: f[4].parse().map_err(|_| err(i, "bad fold"))?,
            corruption: f[5].parse().map_err(|_| err(i, "bad corruption"))?,
        });
    }
    Ok((config, rows))
}

/// Read a dataset written by [`write_dataset`], checking every call file
/// against its manifest row.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let (config, rows) = parse_manifest(&text, &mpath)?;
    let mut calls = Vec::with_capacity(rows.len());
    let mut folds = Vec::with_capacity(rows.len());
    for row in rows {
        let p: PathBuf = dir.join(&row.file);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let call = call_from_bytes(&bytes).map_err(|e| match e {
            Error::Format { msg, .. } => Error::format(p.display().to_string(), msg),
            other => other,
        })?;
        if call.id() != row.id
            || call.meta.duration_s != row.duration
            || call.positives() != row.positives
            || call.meta.corruption != row.corruption
        {
            return Err(Error::format(
                p.display().to_string(),
                format!("call file disagrees with manifest row {}", row.id),
            ));
        }
        calls.push(call);
        folds.push(row.fold);
    }
    Ok(Dataset { config, calls, folds })
}

/// Human-readable rendering of a call: metadata, script, labels as runs and
/// the greedy transcript.
pub fn dump_call(call: &SyntheticCall) -> String {
    use super::render::decode_text;
    use crate::metrics::segments;
    let mut s = format!(
        "{} task={:?} duration={:.2}s T_a={} T_s={} T_m={} sigma={} corruption={:.3}\n",
        call.id(),
        call.meta.task,
        call.meta.duration_s,
        call.audio.rows(),
        call.text.rows(),
        call.labels.len(),
        call.meta.sigma,
        call.meta.corruption
    );
    s += "-- script\n";
    for u in &call.script.utterances {
        let words: Vec<&str> = u.words.iter().map(|w| w.text.as_str()).collect();
        s += &format!(
            "{:7.2}-{:7.2} {:?}/{:?}{} label={} | {}\n",
            u.start(),
            u.stop(),
            u.kind,
            u.speaker,
            if u.rising { " rising" } else { "" },
            u.label,
            words.join(" ")
        );
    }
    s += "-- labeled runs (steps)\n";
    for seg in segments(&call.labels).into_iter().filter(|g| g.label != 0) {
        s += &format!(
            "class {} steps {}..{} ({:.2}-{:.2}s)\n",
            seg.label,
            seg.start,
            seg.stop,
            seg.start_seconds(),
            seg.stop_seconds()
        );
    }
    s += "-- transcript (greedy decoding)\n";
    s += &decode_text(&call.text);
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig::desk().with_calls(6).with_seed(4)
    }

    #[test]
    fn lengths_and_distributions() {
        let c = gen_call(&small(), 0).unwrap();
        assert_eq!(c.audio.rows() % 8, 0);
        assert_eq!(c.audio.rows(), 2 * c.text.rows());
        assert_eq!(c.labels.len() * 8, c.audio.rows());
        for r in 0..c.text.rows() {
            let s: f32 = c.text.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn seed_determinism_and_parallel_equals_serial() {
        let ds = gen_dataset(&small()).unwrap();
        let serial: Vec<SyntheticCall> = (0..6).map(|i| gen_call(&small(), i).unwrap()).collect();
        assert_eq!(ds.calls, serial);
        assert_ne!(gen_call(&small().with_seed(5), 0).unwrap(), ds.calls[0]);
    }

    #[test]
    fn meta_floats_survive_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for index in 0..2000 {
            let meta = CallMeta {
                index,
                task: Task::Question,
                seed: 1,
                duration_s: rng.random_range(10.0..500.0),
                sigma: rng.random(),
                corruption: rng.random(),
                emitted_chars: 3,
                corrupted_chars: 1,
            };
            let back: CallMeta = serde_json::from_str(&serde_json::to_string(&meta).unwrap()).unwrap();
            assert_eq!(back, meta);
            let shown: f64 = meta.duration_s.to_string().parse().unwrap();
            assert_eq!(shown, meta.duration_s);
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_dataset(&small()).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        for c in &ds.calls {
            let bytes = std::fs::read(dir.path().join(format!("{}.mqtd", c.id()))).unwrap();
            assert_eq!(call_to_bytes(&back.calls[c.meta.index]).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_and_inconsistent_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_dataset(&small()).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join("call_00001.mqtd");
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(read_dataset(dir.path()).is_err());
        // swap in another call's file
        std::fs::write(&p, std::fs::read(dir.path().join("call_00002.mqtd")).unwrap()).unwrap();
        assert!(read_dataset(dir.path()).is_err());
        // unknown version
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(call_from_bytes(&v2).is_err());
    }

    #[test]
    fn folds_balanced() {
        let counts: Vec<usize> = (0..23).map(|i| (i * 7) % 5).collect();
        let f = assign_folds(&counts, 5);
        let sizes: Vec<usize> = (0..5).map(|k| f.iter().filter(|&&x| x == k).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
