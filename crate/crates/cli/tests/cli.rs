use std::path::Path;
use std::process::{Command, Output};

fn stgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgc"))
        .current_dir(dir)
        .env("STGC_THREADS", "2")
        .args(args)
        .output()
        .expect("spawn stgc")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stgc(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 8] = [
    "--set",
    "model.channels=8",
    "--set",
    "model.reduction=4",
    "--set",
    "model.blocks=1",
    "--set",
    "train.epochs=2",
];

fn synth(dir: &Path) {
    ok(dir, &["synth", "--out", "data", "--set", "data.train=12", "--set", "data.test=4", "--seed", "3"]);
}

#[test]
fn test_synth_writes_manifest_and_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let manifest = std::fs::read_to_string(tmp.path().join("data/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("train ")).count(), 12);
    assert_eq!(manifest.lines().filter(|l| l.starts_with("test ")).count(), 4);
    let first = std::fs::read_to_string(tmp.path().join("data/train_0000.mseq")).unwrap();
    assert!(first.starts_with("mseq v1 12 35 3 25"), "{}", first.lines().next().unwrap());
    assert!(tmp.path().join("data/skeleton.txt").exists());
    let cfg = std::fs::read_to_string(tmp.path().join("data/config.txt")).unwrap();
    assert!(cfg.contains("data.seed=3\n"));
}

#[test]
fn test_train_then_eval_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let run = |out: &str| {
        let mut args = vec!["train", "--out", out, "--set", "data.manifest=data/manifest.txt"];
        args.extend(SMALL);
        let stdout = ok(tmp.path(), &args);
        assert!(stdout.contains("epochs 2"), "{stdout}");
        let ckpt = format!("{out}/model.ckpt");
        let eval_out = format!("{out}/eval");
        ok(tmp.path(), &["eval", "--out", &eval_out, "--checkpoint", &ckpt, "--set", "data.manifest=data/manifest.txt"]);
        let read = |p: String| std::fs::read(tmp.path().join(p)).unwrap();
        (read(format!("{out}/loss.csv")), read(format!("{eval_out}/eval.csv")), read(format!("{eval_out}/eval.txt")))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let loss = String::from_utf8(a.0).unwrap();
    assert!(loss.starts_with("epoch,loss,lr\n1,"), "{loss}");
    assert!(String::from_utf8(a.1).unwrap().starts_with("horizon_ms,mpjpe\n80,"));
}

#[test]
fn test_untrained_eval_equals_zero_velocity() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let m = "data.manifest=data/manifest.txt";
    ok(tmp.path(), &["eval", "--out", "zv", "--zero-velocity", "--set", m]);
    let mut args = vec!["eval", "--out", "fresh", "--set", m];
    args.extend(SMALL);
    ok(tmp.path(), &args);
    let read = |p: &str| std::fs::read_to_string(tmp.path().join(p)).unwrap();
    assert_eq!(read("zv/eval.csv"), read("fresh/eval.csv"));
}

#[test]
fn test_params_reports_comparison_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["params", "--kind", "dstd", "--J", "25", "--T", "35", "--C", "64", "--units", "7"]);
    let total: usize = out
        .lines()
        .find_map(|l| l.strip_prefix("total"))
        .map(|v| v.trim().parse().unwrap())
        .expect("total line");
    assert!((total as f64 - 0.13e6).abs() <= 0.25 * 0.13e6, "{total}");
    assert_eq!(out.lines().count(), 8);
}

#[test]
fn test_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["verify", "--instances", "20"]);
    assert!(!out.contains("[FAIL]"), "{out}");
    assert!(out.contains("[PASS] factorization"));
}

#[test]
fn test_bench_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "bench",
        "--set",
        "bench.frames=4,6,8,10",
        "--set",
        "bench.channels=4",
        "--set",
        "bench.repetitions=11",
    ];
    ok(tmp.path(), &args);
    let csv = std::fs::read_to_string(tmp.path().join("stgc-out/bench.csv")).unwrap();
    assert!(csv.starts_with("T,J,sts_seconds,dstd_seconds\n4,3,"), "{csv}");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn test_config_file_and_logging() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.cfg"), "# comment\nmodel.kind = sts\n\nmodel.channels=16\n").unwrap();
    let out = stgc(tmp.path(), &["params", "--config", "run.cfg", "--set", "model.channels=8"]);
    assert!(out.status.success());
    let log = String::from_utf8(out.stderr).unwrap();
    assert!(log.contains("model.kind=sts\n"), "{log}");
    assert!(log.contains("model.channels=8\n"), "overrides win over the file");
}

#[test]
fn test_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["params", "--set", "model.nope=1"],
        &["params", "--set", "nosection=1"],
        &["train", "--set", "data.manifest=missing.txt"],
        &["params", "--config", "missing.cfg"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = stgc(tmp.path(), args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
    std::fs::write(tmp.path().join("bad.cfg"), "model.channels\n").unwrap();
    let out = stgc(tmp.path(), &["params", "--config", "bad.cfg"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.cfg:1"), "{err}");
}
