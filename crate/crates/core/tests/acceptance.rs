//! Acceptance criteria, one `[PASS]`/`[FAIL]` line each.
//!
//! Criteria 1, 2, 3 (oracles), 6 and 9 run with the default test command.
//! The criteria that train models (3 on trained runs, 4, 5, 7, 8 and the
//! training-loss bound) take about an hour on one core and are ignored by
//! default:
//!
//! ```text
//! cargo test --release -p multiqt --test acceptance -- --ignored --nocapture
//! ```

mod common;

use std::time::Instant;

use multiqt::experiments::{
    ablation_grid, baseline_scores, mean_under, model_gradient_check, modality_grid, prepare, ModalityGrid, RunScores,
    Setup, TestPermutation,
};
use multiqt::model::{checkpoint, FusionMode, Modality, ModelConfig, MultiQt};
use multiqt::stream::{bench_call, bench_offline, bench_rtf, stream_call};
use multiqt::synthdata::{gen_dataset, write_dataset, GenConfig};
use multiqt::train::{evaluate, fit, Example, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(id: &str, name: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn na(id: &str, name: &str, detail: &str) {
    println!("[N/A ] {id} {name}: {detail}");
}

fn pts(x: f64) -> f64 {
    100.0 * x
}

#[test]
fn c1_gradient_integrity() {
    let start = Instant::now();
    let train = TrainConfig {
        l2: 0.1,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for fusion in [FusionMode::Concat, FusionMode::Tensor] {
        for multitask in [false, true] {
            let cfg = ModelConfig::tiny().with_fusion(fusion).with_multitask(multitask);
            let tc = TrainConfig {
                multitask_beta: if multitask { 0.5 } else { 0.0 },
                ..train.clone()
            };
            let r = model_gradient_check(&cfg, &tc, &[64, 48], 11).unwrap();
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = line(
        "C1",
        "gradient integrity",
        worst < 1e-3 && secs < 120.0,
        &format!("max relative error {worst:.2e} over {checked} coordinates (< 1e-3), {secs:.1} s (< 120 s)"),
    );
    assert!(ok);
}

#[test]
fn c2_streaming_equivalence() {
    let model = MultiQt::new(ModelConfig::desk().with_seed(5)).unwrap();
    let ds = gen_dataset(&GenConfig::desk().with_calls(20).with_seed(77)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst, mut runs, mut count_ok) = (0.0f64, 0, true);
    for c in &ds.calls {
        let t_a = 2 * rng.random_range(c.audio.rows() / 4..c.audio.rows() / 2);
        let audio = c.audio.slice_rows(0, t_a);
        let text = c.text.slice_rows(0, t_a / 2);
        let offline = model.forward(&audio, &text).unwrap();
        let mut chunkings = vec![vec![100]];
        for _ in 0..4 {
            chunkings.push((0..rng.random_range(1..6)).map(|_| rng.random_range(1..400)).collect());
        }
        for ch in chunkings {
            let s = stream_call(&model, &audio, &text, &ch).unwrap();
            count_ok &= s.probs.rows() == t_a / 8 && offline.probs.rows() == t_a / 8;
            worst = worst.max(s.probs.max_abs_diff(&offline.probs));
            runs += 1;
        }
    }
    let ok = line(
        "C2",
        "streaming equivalence",
        worst <= 1e-5 && count_ok,
        &format!("{runs} streamed runs, max |stream - offline| {worst:.1e} (<= 1e-5), step counts floor(T_a/8): {count_ok}"),
    );
    assert!(ok);
}

#[test]
fn c3_metric_oracles() {
    let r = common::check_fixtures(1000, 3);
    let ok = line(
        "C3a",
        "metric oracles",
        r.is_ok(),
        &match &r {
            Ok(()) => "timestep and instance counts equal brute force on 1000 fixtures".to_string(),
            Err(e) => e.clone(),
        },
    );
    assert!(ok);
}

#[test]
fn c6_real_time() {
    let model = MultiQt::new(ModelConfig::full().with_seed(0)).unwrap();
    let (audio, text) = bench_call(166.0, 0).unwrap();
    let single = bench_rtf(&model, &audio, &text, 1.0, 1).unwrap();
    println!("{}", single.table());
    let offline = bench_offline(&model, &audio, &text, 3).unwrap();
    let a = line(
        "C6a",
        "streaming RTF",
        single.rtf >= 5.0,
        &format!(
            "{:.1} s call in 1 s chunks, RTF {:.1} (>= 5, hard floor 1), p99 chunk latency {:.1} ms",
            single.audio_seconds, single.rtf, single.latency.p99_ms
        ),
    );
    let b = line(
        "C6b",
        "offline RTF",
        offline.rtf >= 50.0,
        &format!("RTF {:.1} (>= 50)", offline.rtf),
    );
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let c = if cores >= 4 {
        let eight = bench_rtf(&model, &audio, &text, 1.0, 8).unwrap();
        line(
            "C6c",
            "8-stream throughput",
            eight.rtf >= 4.0 * single.rtf,
            &format!("{:.1}x single stream on {cores} cores (>= 4x)", eight.rtf / single.rtf),
        )
    } else {
        na("C6c", "8-stream throughput", &format!("needs >= 4 cores, machine has {cores}"));
        true
    };
    assert!(a && b && c);
}

/// Tiny-scale end-to-end pipeline; every artifact as bytes.
fn pipeline(dir: &std::path::Path) -> (Vec<Vec<u8>>, Vec<u8>, String) {
    let cfg = GenConfig {
        mean_duration_s: 12.0,
        std_duration_s: 1.0,
        min_duration_s: 10.0,
        max_duration_s: 14.0,
        ..GenConfig::desk()
    }
    .with_calls(12)
    .with_seed(9);
    let ds = gen_dataset(&cfg).unwrap();
    write_dataset(&ds, dir).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let files = names.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let train: Vec<Example<f32>> = ds.not_fold(4).iter().map(|c| c.example()).collect();
    let test: Vec<Example<f32>> = ds.fold(4).iter().map(|c| c.example()).collect();
    let tc = TrainConfig {
        epochs: 3,
        p_a: 0.1,
        p_s: 0.5,
        ..TrainConfig::desk()
    };
    let out = fit(MultiQt::new(ModelConfig::tiny().with_seed(4)).unwrap(), &train, &test, &tc, None).unwrap();
    let ckpt = checkpoint::to_bytes(&out.model).unwrap();
    let ev = evaluate(&out.model, &test).unwrap();
    let report = serde_json::to_string(&(&out.log, &ev.timestep, &ev.instance, &ev.predictions)).unwrap();
    (files, ckpt, report)
}

#[test]
fn c9_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| pipeline(b.path()));
    let ok = line(
        "C9",
        "determinism",
        first == second,
        &format!(
            "datasets ({} files) {}, checkpoints {}, reports {} across two runs",
            first.0.len(),
            if first.0 == second.0 { "identical" } else { "DIFFER" },
            if first.1 == second.1 { "identical" } else { "DIFFER" },
            if first.2 == second.2 { "identical" } else { "DIFFER" },
        ),
    );
    assert!(ok);
}

fn forgiving(runs: &[&RunScores]) -> (bool, String) {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| r.unpermuted().instance_f1 < r.unpermuted().timestep_f1)
        .map(|r| format!("{:?}/seed {}", r.modality, r.seed))
        .collect();
    (bad.is_empty(), if bad.is_empty() { String::new() } else { format!("; violated by {}", bad.join(", ")) })
}

fn grid_line(g: &ModalityGrid) -> String {
    let (a, t, b) = (g.mean(Modality::Audio), g.mean(Modality::Text), g.mean(Modality::Both));
    format!(
        "instance F1 A {:.1}, T {:.1}, A+T {:.1}",
        pts(a.instance_f1),
        pts(t.instance_f1),
        pts(b.instance_f1)
    )
}

/// Every run's training loss drops below `0.3 ln 6` within 50 epochs.
fn loss_bound(runs: &[RunScores]) -> (bool, f64) {
    let worst = runs
        .iter()
        .map(|r| r.best_train_loss_within(50).unwrap_or(f64::INFINITY))
        .fold(f64::MIN, f64::max);
    (worst < 0.3 * 6f64.ln(), worst)
}

#[test]
#[ignore = "trains 21 models, about an hour on one core"]
fn trained_criteria() {
    let mut all = true;

    // question task
    let setup = Setup::desk();
    let start = Instant::now();
    let data = prepare(&setup).unwrap();
    let grid = modality_grid(&setup, &data).unwrap();
    let grid_secs = start.elapsed().as_secs_f64();
    print!("{}", grid.table());

    let (a, t, b) = (grid.mean(Modality::Audio), grid.mean(Modality::Text), grid.mean(Modality::Both));
    let best_uni = a.instance_f1.max(t.instance_f1);
    all &= line(
        "C4",
        "modality ordering",
        b.instance_f1 > t.instance_f1
            && t.instance_f1 > a.instance_f1
            && b.instance_f1 - best_uni >= 0.01
            && b.instance_f1 >= 0.85,
        &format!(
            "{}; A+T - best unimodal {:+.1} points (>= 1), A+T >= 85; {} seeds, {} train / {} test calls",
            grid_line(&grid),
            pts(b.instance_f1 - best_uni),
            setup.seeds.len(),
            data.split.train.len(),
            data.split.test.len()
        ),
    );
    na(
        "C4",
        "runtime on 4 cores",
        &format!(
            "grid took {:.0} s on {} core(s)",
            grid_secs,
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    );

    let (loss_ok, worst_loss) = loss_bound(&grid.both);
    all &= line(
        "C4b",
        "training loss bound",
        loss_ok,
        &format!(
            "worst A+T run reaches train loss {worst_loss:.3} within 50 epochs (< 0.3 ln 6 = {:.3})",
            0.3 * 6f64.ln()
        ),
    );

    let ablation = ablation_grid(&setup, &data, Some(grid.both.clone())).unwrap();
    print!("{}", ablation.table());
    let van_text = mean_under(&ablation.vanilla, TestPermutation::TEXT).instance_f1;
    let per_text = mean_under(&ablation.permuted, TestPermutation::TEXT).instance_f1;
    let van = mean_under(&ablation.vanilla, TestPermutation::NONE).instance_f1;
    let per = mean_under(&ablation.permuted, TestPermutation::NONE).instance_f1;
    all &= line(
        "C5a",
        "permutation robustness",
        per_text - van_text >= 0.10,
        &format!(
            "text permuted at test: permutation-trained {:.1} vs vanilla {:.1}, {:+.1} points (>= 10)",
            pts(per_text),
            pts(van_text),
            pts(per_text - van_text)
        ),
    );
    all &= line(
        "C5b",
        "permutation cost",
        (per - van).abs() <= 0.02,
        &format!(
            "unpermuted test: permutation-trained {:.1} vs vanilla {:.1}, {:+.1} points (within 2)",
            pts(per),
            pts(van),
            pts(per - van)
        ),
    );

    let bow = baseline_scores(&setup, &data).unwrap();
    all &= line(
        "C8",
        "baseline ordering",
        b.timestep_f1 - bow.timestep_f1 >= 0.05 && b.instance_f1 - bow.instance_f1 >= 0.05,
        &format!(
            "A+T {:.1}/{:.1} vs FNN-BOW {:.1}/{:.1} timestep/instance F1 (margin >= 5 each)",
            pts(b.timestep_f1),
            pts(b.instance_f1),
            pts(bow.timestep_f1),
            pts(bow.instance_f1)
        ),
    );

    // symptom task
    let sym_setup = Setup::desk_symptom();
    let sym_data = prepare(&sym_setup).unwrap();
    let sym = modality_grid(&sym_setup, &sym_data).unwrap();
    print!("{}", sym.table());
    let (sa, st, sb) = (sym.mean(Modality::Audio), sym.mean(Modality::Text), sym.mean(Modality::Both));
    all &= line(
        "C7",
        "symptom generalization",
        sb.instance_f1 >= st.instance_f1 && st.instance_f1 > sa.instance_f1 && st.instance_f1 - sa.instance_f1 >= 0.10,
        &format!("{}; T - A {:+.1} points (>= 10)", grid_line(&sym), pts(st.instance_f1 - sa.instance_f1)),
    );

    let runs: Vec<&RunScores> = grid.all_runs().chain(&ablation.permuted).chain(sym.all_runs()).collect();
    let (fg, detail) = forgiving(&runs);
    all &= line(
        "C3b",
        "instance F1 >= timestep F1",
        fg,
        &format!("checked on {} trained runs{detail}", runs.len()),
    );

    assert!(all, "some acceptance criteria failed");
}
