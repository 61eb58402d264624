use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use multiqt::experiments::{ablation_grid, permute_test, split, AblationGrid, Prepared, Setup, TestPermutation};
use multiqt::metrics::segments;
use multiqt::model::{checkpoint, FusionMode, Modality, ModelConfig, MultiQt};
use multiqt::stream::{bench_call, bench_offline, bench_rtf, StreamSession, FRAMES_PER_SECOND};
use multiqt::synthdata::{
    assign_folds, call_from_bytes, dump_call, gen_dataset, read_dataset, write_dataset, Dataset, GenConfig,
    SyntheticCall, Task, FOLDS,
};
use multiqt::train::{evaluate, fit, Example, TrainConfig};
use serde_json::json;

use crate::run::{dataset_hash, file_hash, Run};
use crate::{ModelArgs, Permute, Preset, Profile, TrainArgs};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_dataset(dir: &Path, folds: usize) -> Result<Dataset> {
    if !dir.exists() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    let mut ds = read_dataset(dir)?;
    if folds == 0 {
        bail!("--folds must be at least 1");
    }
    if folds != FOLDS {
        let counts: Vec<usize> = ds.calls.iter().map(|c| c.positives()).collect();
        ds.folds = assign_folds(&counts, folds);
    }
    Ok(ds)
}

fn load_model(path: &Path) -> Result<MultiQt<f32>> {
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Ok(checkpoint::load(path)?)
}

fn preset_config(p: Preset) -> ModelConfig {
    match p {
        Preset::Full => ModelConfig::full(),
        Preset::Desk => ModelConfig::desk(),
        Preset::Tiny => ModelConfig::tiny(),
    }
}

fn model_config(args: &ModelArgs, seed: u64) -> Result<ModelConfig> {
    let modality: Modality = args.modality.parse()?;
    let fusion = match args.fusion.as_str() {
        "tensor" => FusionMode::Tensor,
        _ => FusionMode::Concat,
    };
    let cfg = preset_config(args.preset)
        .with_modality(modality)
        .with_fusion(fusion)
        .with_multitask(args.multitask_beta.is_some())
        .with_seed(seed);
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(args: &TrainArgs, model: &ModelArgs) -> Result<TrainConfig> {
    let base = match model.preset {
        Preset::Full => TrainConfig::default(),
        Preset::Desk | Preset::Tiny => TrainConfig::desk(),
    };
    let mut cfg = match &args.config {
        Some(p) => base
            .parse_over(&read_text(p)?)
            .map_err(|e| anyhow!("{}: {e}", p.display()))?,
        None => base,
    };
    cfg.seed = args.seed;
    if let Some(v) = args.pa {
        cfg.p_a = v;
    }
    if let Some(v) = args.ps {
        cfg.p_s = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(b) = model.multitask_beta {
        cfg.multitask_beta = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn val_examples(args: &TrainArgs) -> Result<Vec<Example<f32>>> {
    match &args.val {
        Some(dir) => Ok(load_dataset(dir, FOLDS)?.calls.iter().map(SyntheticCall::example).collect()),
        None => Ok(Vec::new()),
    }
}

pub fn gen(
    n: usize,
    seed: u64,
    task: &str,
    profile: Profile,
    config: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = match profile {
        Profile::Desk => GenConfig::desk(),
        Profile::Full => GenConfig::default(),
    };
    cfg.task = task.parse::<Task>()?;
    if let Some(p) = config {
        cfg = cfg.parse_over(&read_text(p)?).map_err(|e| anyhow!("{}: {e}", p.display()))?;
    }
    cfg = cfg.with_calls(n).with_seed(seed);
    cfg.validate()?;
    let run = Run::open("gen", serde_json::to_value(&cfg)?, seed, None)?;
    let dir = out.unwrap_or_else(|| run.path("data"));
    let ds = gen_dataset(&cfg)?;
    write_dataset(&ds, &dir)?;
    let hash = dataset_hash(&dir)?;
    let cer = ds.measured_cer();
    let audio_s: f64 = ds.calls.iter().map(|c| c.audio_seconds()).sum();
    let positives: usize = ds.calls.iter().map(|c| c.positives()).sum();
    println!("dataset   {}", dir.display());
    println!("calls     {}  ({:.1} min of audio, {} positives)", ds.calls.len(), audio_s / 60.0, positives);
    println!("asr cer   {cer:.3}  (corruption {})", cfg.corruption);
    println!("hash      {hash}");
    let run_dir = run.finish(
        None,
        json!({"dataset": dir, "dataset_hash": hash, "calls": ds.calls.len(), "audio_seconds": audio_s,
               "positives": positives, "measured_cer": cer}),
    )?;
    println!("run       {}", run_dir.display());
    Ok(())
}

pub fn train(data: &Path, margs: &ModelArgs, targs: &TrainArgs) -> Result<()> {
    let ds = load_dataset(data, targs.folds)?;
    let hash = dataset_hash(data)?;
    let mc = model_config(margs, targs.seed)?;
    let tc = train_config(targs, margs)?;
    let val = val_examples(targs)?;
    let run = Run::open(
        "train",
        json!({"model": mc, "train": tc, "folds": targs.folds, "val": targs.val}),
        tc.seed,
        Some(hash),
    )?;
    let test_fold = targs.folds - 1;
    let sp = split(&ds, test_fold);
    if sp.train.is_empty() {
        bail!("no training calls outside fold {test_fold}");
    }
    let log_path = run.path("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("cannot write {}", log_path.display()))?);
    let outcome = fit(MultiQt::new(mc)?, &sp.train, &val, &tc, Some(&mut log))?;
    log.flush()?;
    let ckpt = run.path("model.mqtm");
    checkpoint::save(&outcome.model, &ckpt)?;
    let ev = evaluate(&outcome.model, &sp.test)?;
    println!("{}", ev.timestep.table());
    println!("{}", ev.instance.table());
    let report = json!({"test_fold": test_fold, "best_epoch": outcome.best_epoch, "best_val_f1": outcome.best_val_f1,
                        "timestep": ev.timestep, "instance": ev.instance});
    run.write_json("report.json", &report)?;
    let dir = run.finish(
        Some(file_hash(&ckpt)?),
        json!({"timestep_f1": ev.timestep.macro_f1, "instance_f1": ev.instance.macro_f1, "best_epoch": outcome.best_epoch}),
    )?;
    println!("checkpoint {}", ckpt.display());
    println!("run        {}", dir.display());
    Ok(())
}

fn permutation(p: Permute) -> TestPermutation {
    match p {
        Permute::None => TestPermutation::NONE,
        Permute::Audio => TestPermutation::AUDIO,
        Permute::Text => TestPermutation::TEXT,
    }
}

pub fn eval(model: &Path, data: &Path, fold: Option<usize>, folds: usize, permute: Permute, seed: u64) -> Result<()> {
    let m = load_model(model)?;
    let ds = load_dataset(data, folds)?;
    let calls: Vec<&SyntheticCall> = match fold {
        Some(f) if f >= folds => bail!("fold {f} out of range for {folds} folds"),
        Some(f) => ds.fold(f),
        None => ds.calls.iter().collect(),
    };
    let examples: Vec<Example<f32>> = calls.iter().map(|c| c.example()).collect();
    let perm = permutation(permute);
    let examples = permute_test(&examples, perm, seed);
    let ckpt_hash = file_hash(model)?;
    let run = Run::open(
        "eval",
        json!({"checkpoint": ckpt_hash, "fold": fold, "folds": folds, "permute": perm.short()}),
        seed,
        Some(dataset_hash(data)?),
    )?;
    let ev = evaluate(&m, &examples)?;
    println!("{}", ev.timestep.table());
    println!("{}", ev.instance.table());
    run.write_json(
        "report.json",
        &json!({"calls": calls.len(), "permute": perm.short(), "loss": ev.loss, "timestep": ev.timestep, "instance": ev.instance}),
    )?;
    let dir = run.finish(
        Some(ckpt_hash),
        json!({"timestep_f1": ev.timestep.macro_f1, "instance_f1": ev.instance.macro_f1}),
    )?;
    println!("run {}", dir.display());
    Ok(())
}

fn find_call<'a>(ds: &'a Dataset, id: Option<&str>) -> Result<&'a SyntheticCall> {
    match id {
        None => ds.calls.first().ok_or_else(|| anyhow!("dataset has no calls")),
        Some(id) => ds
            .calls
            .iter()
            .find(|c| c.id() == id)
            .ok_or_else(|| anyhow!("no call `{id}` in dataset")),
    }
}

pub fn stream(model: &Path, data: &Path, call: Option<&str>, chunk_seconds: f64) -> Result<()> {
    let m = load_model(model)?;
    let ds = load_dataset(data, FOLDS)?;
    let c = find_call(&ds, call)?;
    let chunk = ((chunk_seconds * FRAMES_PER_SECOND as f64).round() as usize).next_multiple_of(2);
    if chunk == 0 {
        bail!("--chunk-seconds too small");
    }
    let run = Run::open(
        "stream",
        json!({"checkpoint": file_hash(model)?, "call": c.id(), "chunk_frames": chunk}),
        0,
        Some(dataset_hash(data)?),
    )?;
    let mut session = StreamSession::open(&m);
    let mut parts = Vec::new();
    let mut pos = 0;
    let mut per_chunk = Vec::new();
    while pos < c.audio.rows() {
        let end = (pos + chunk).min(c.audio.rows());
        let out = session.push_chunk(&c.audio.slice_rows(pos, end), &c.text.slice_rows(pos / 2, end / 2))?;
        per_chunk.push(out.probs.rows());
        parts.push(out);
        pos = end;
    }
    let tail = session.finalize()?;
    let tail_rows = tail.probs.rows();
    parts.push(tail);
    let streamed = multiqt::stream::concat_predictions(&parts, m.classes())?;
    let offline = m.forward(&c.audio, &c.text)?;
    let diff = streamed.probs.max_abs_diff(&offline.probs);
    let labels = streamed.labels();
    println!(
        "{}: {} chunks of {} frames, {} steps emitted ({} at finalize), max |stream - offline| = {diff:e}",
        c.id(),
        per_chunk.len(),
        chunk,
        session.emitted(),
        tail_rows
    );
    let segs: Vec<_> = segments(&labels)
        .into_iter()
        .filter(|s| s.label != 0)
        .map(|s| json!({"label": s.label, "start_s": s.start_seconds(), "stop_s": s.stop_seconds()}))
        .collect();
    for s in &segs {
        println!("  class {} {:.2}-{:.2} s", s["label"], s["start_s"].as_f64().unwrap_or(0.0), s["stop_s"].as_f64().unwrap_or(0.0));
    }
    run.write_json(
        "stream_report.json",
        &json!({"call": c.id(), "chunk_frames": chunk, "emitted_per_chunk": per_chunk, "emitted_at_finalize": tail_rows,
                "steps": session.emitted(), "max_abs_diff_vs_offline": diff, "labels": labels, "segments": segs}),
    )?;
    let dir = run.finish(None, json!({"steps": session.emitted(), "max_abs_diff_vs_offline": diff}))?;
    println!("run {}", dir.display());
    Ok(())
}

pub fn bench(
    model: Option<&Path>,
    preset: Preset,
    duration: f64,
    chunk_seconds: f64,
    streams: &[usize],
    offline_repeats: usize,
    seed: u64,
) -> Result<()> {
    let m = match model {
        Some(p) => load_model(p)?,
        None => MultiQt::new(preset_config(preset).with_seed(seed))?,
    };
    let (audio, text) = bench_call(duration, seed)?;
    let run = Run::open(
        "bench",
        json!({"model": m.config(), "duration": duration, "chunk_seconds": chunk_seconds, "streams": streams}),
        seed,
        None,
    )?;
    let mut reports = Vec::new();
    for &n in streams {
        let r = bench_rtf(&m, &audio, &text, chunk_seconds, n)?;
        println!("{}", r.table());
        reports.push(r);
    }
    let off = bench_offline(&m, &audio, &text, offline_repeats)?;
    println!(
        "offline        audio {:>8.1}s  wall {:>8.4}s  RTF {:>8.1}",
        off.audio_seconds, off.wall_seconds, off.rtf
    );
    for r in &reports {
        println!("{}", r.machine_line());
    }
    println!("{}", off.machine_line());
    run.write_json("bench.json", &json!({"streaming": reports, "offline": off}))?;
    run.finish(None, json!({"streaming_rtf": reports.iter().map(|r| r.rtf).collect::<Vec<_>>(), "offline_rtf": off.rtf}))?;
    Ok(())
}

pub fn ablate(data: &Path, margs: &ModelArgs, targs: &TrainArgs, more_seeds: &[u64]) -> Result<()> {
    let ds = load_dataset(data, targs.folds)?;
    let hash = dataset_hash(data)?;
    let mc = model_config(margs, targs.seed)?;
    if mc.modality != Modality::Both {
        bail!("the ablation needs --modality both");
    }
    let mut tc = train_config(targs, margs)?;
    let (p_a, p_s) = (targs.pa.unwrap_or(0.1), targs.ps.unwrap_or(0.5));
    tc.p_a = 0.0;
    tc.p_s = 0.0;
    let mut seeds = vec![targs.seed];
    seeds.extend(more_seeds.iter().copied().filter(|s| *s != targs.seed));
    let setup = Setup {
        gen: ds.config.clone(),
        model: mc,
        train: tc,
        val_calls: 0,
        seeds,
        bow: Default::default(),
    };
    let run = Run::open(
        "ablate",
        json!({"setup": setup, "p_a": p_a, "p_s": p_s, "folds": targs.folds, "val": targs.val}),
        targs.seed,
        Some(hash),
    )?;
    let prepared = Prepared {
        split: split(&ds, targs.folds - 1),
        val: val_examples(targs)?,
        dataset: ds,
    };
    let grid = if (p_a, p_s) == (0.1, 0.5) {
        ablation_grid(&setup, &prepared, None)?
    } else {
        let tests = &AblationGrid::TESTS;
        AblationGrid {
            vanilla: multiqt::experiments::seeded_runs(&setup, &prepared, Modality::Both, 0.0, 0.0, tests)?,
            permuted: multiqt::experiments::seeded_runs(&setup, &prepared, Modality::Both, p_a, p_s, tests)?,
        }
    };
    print!("{}", grid.table());
    run.write_json("ablation.json", &grid)?;
    let dir = run.finish(None, serde_json::to_value(&grid)?)?;
    println!("run {}", dir.display());
    Ok(())
}

pub fn dump(data: &Path, call: Option<&str>) -> Result<()> {
    if !data.exists() {
        bail!("{} does not exist", data.display());
    }
    let text = if data.is_file() {
        let bytes = std::fs::read(data).with_context(|| format!("cannot read {}", data.display()))?;
        dump_call(&call_from_bytes(&bytes)?)
    } else {
        let ds = read_dataset(data)?;
        dump_call(find_call(&ds, call)?)
    };
    print!("{text}");
    Ok(())
}
