use std::path::Path;
use std::process::{Command, Output};

fn multiqt(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiqt"))
        .args(args)
        .env("MULTIQT_RUN_ROOT", root.join("runs"))
        .output()
        .expect("spawn multiqt")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn hash_line(o: &Output) -> String {
    stdout(o)
        .lines()
        .find(|l| l.starts_with("hash"))
        .expect("hash line")
        .to_string()
}

const SMALL_GEN: &str = "mean_duration_s = 12\nstd_duration_s = 1\nmin_duration_s = 10\nmax_duration_s = 14\n";

fn small_dataset(root: &Path, name: &str, n: &str) -> Output {
    let cfg = root.join("gen.cfg");
    std::fs::write(&cfg, SMALL_GEN).unwrap();
    let out = root.join(name);
    multiqt(
        root,
        &["gen", "--n", n, "--seed", "3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
    )
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = multiqt(dir.path(), &["gen", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_exit_1_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let m = missing.to_str().unwrap();
    for args in [
        vec!["train", "--data", m],
        vec!["eval", "--model", m, "--data", m],
        vec!["dump", "--data", m],
        vec!["gen", "--config", m],
    ] {
        let o = multiqt(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).contains("nowhere"), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn bad_config_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "corruption = 0.3\nno_such_key = 1\n").unwrap();
    let o = multiqt(dir.path(), &["gen", "--n", "2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_dataset(dir.path(), "a", "6");
    let b = small_dataset(dir.path(), "b", "6");
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    assert_eq!(hash_line(&a), hash_line(&b));
    for f in ["manifest.tsv", "call_00000.mqtd", "call_00005.mqtd"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let d = multiqt(dir.path(), &["dump", "--data", dir.path().join("a").to_str().unwrap(), "--call", "call_00001"]);
    assert!(d.status.success(), "{}", stderr(&d));
    assert!(stdout(&d).contains("call_00001"));
}

#[test]
fn train_eval_stream_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(small_dataset(root, "data", "10").status.success());
    let data = root.join("data");
    let d = data.to_str().unwrap();
    let train_args = ["train", "--data", d, "--preset", "tiny", "--epochs", "2", "--folds", "5"];
    let t = multiqt(root, &train_args);
    assert!(t.status.success(), "{}", stderr(&t));
    let ckpt = stdout(&t)
        .lines()
        .find_map(|l| l.strip_prefix("checkpoint ").map(|s| s.trim().to_string()))
        .expect("checkpoint line");
    let run_dir = Path::new(&ckpt).parent().unwrap().to_path_buf();
    let report = std::fs::read(run_dir.join("report.json")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert!(manifest["dataset_hash"].is_string());
    let ckpt_bytes = std::fs::read(&ckpt).unwrap();

    // Same inputs: same run directory, bit-identical checkpoint and report.
    let t2 = multiqt(root, &train_args);
    assert!(t2.status.success(), "{}", stderr(&t2));
    assert_eq!(std::fs::read(&ckpt).unwrap(), ckpt_bytes);
    assert_eq!(std::fs::read(run_dir.join("report.json")).unwrap(), report);

    let e = multiqt(root, &["eval", "--model", &ckpt, "--data", d, "--fold", "4", "--permute", "text"]);
    assert!(e.status.success(), "{}", stderr(&e));
    assert!(stdout(&e).contains("macro"), "{}", stdout(&e));

    let s = multiqt(root, &["stream", "--model", &ckpt, "--data", d, "--chunk-seconds", "0.7"]);
    assert!(s.status.success(), "{}", stderr(&s));
    assert!(stdout(&s).contains("max |stream - offline| = 0e0"), "{}", stdout(&s));
}

#[test]
fn bench_prints_machine_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = multiqt(
        dir.path(),
        &["bench", "--preset", "tiny", "--duration", "8", "--streams", "1,2", "--offline-repeats", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains("rtf=")).count(), 3, "{out}");
}
