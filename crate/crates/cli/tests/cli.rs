use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neuroflap"));
    c.env("RUST_LOG", "warn")
        .env_remove("NEUROFLAP_HARNESS")
        .env_remove("NEUROFLAP_HARNESS_SRC");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} exited with {:?}", out.status);
    String::from_utf8(out.stdout).unwrap()
}

fn driver() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/harness.c")
}

fn have_cc() -> bool {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success())
}

const TRAIN_SMALL: &[&str] = &[
    "--neurons", "10", "--epochs", "2", "--window", "400", "--stride", "200", "--burn-in", "50", "--batch", "4",
];

#[test]
fn toy_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data", "--minutes", "2", "--seed", "3", "--log-seconds", "30"]);
    assert_eq!(fs::read_dir(d.join("data")).unwrap().count(), 4);

    let mut est = vec!["train", "--role", "estimator", "--out", "est.ckpt", "--history", "est.csv"];
    est.extend_from_slice(TRAIN_SMALL);
    ok(d, &est);
    let mut ctl = vec!["train", "--role", "pitch-offset", "--out", "ctl.ckpt"];
    ctl.extend_from_slice(TRAIN_SMALL);
    ok(d, &ctl);
    let history = fs::read_to_string(d.join("est.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let summary = ok(d, &["eval", "--checkpoint", "est.ckpt", "--out", "eval_est"]);
    assert_eq!(summary.lines().count(), 3);
    assert!(d.join("eval_est/eval.csv").is_file());
    assert!(fs::read_dir(d.join("eval_est")).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    ok(d, &["export", "--estimator", "est.ckpt", "--controller", "ctl.ckpt", "--out", "export"]);
    for f in ["nf_net.h", "nf_net.c", "manifest.txt", "network.spec"] {
        assert!(d.join("export").join(f).is_file(), "{f}");
    }

    let skipped = run(d, &["validate", "--artifact", "export", "--steps", "300", "--out", "val_skip"]);
    assert_eq!(skipped.status.code(), Some(3));
    let report = fs::read_to_string(d.join("val_skip/report.txt")).unwrap();
    assert!(report.starts_with("status: skipped"), "{report}");

    if have_cc() {
        let src = driver();
        let text = ok(d, &["validate", "--artifact", "export", "--harness-src", src.to_str().unwrap(), "--out", "val"]);
        assert!(text.starts_with("status: passed"), "{text}");
    }

    ok(d, &["bench", "--estimator", "est.ckpt", "--controller", "ctl.ckpt", "--steps", "100", "--plot", "--out", "bench"]);
    let csv = fs::read_to_string(d.join("bench/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("bench/bench.svg").is_file());
}

#[test]
fn expert_scores_itself_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data", "--minutes", "1", "--seed", "5", "--log-seconds", "20"]);
    for role in ["estimator", "pitch-offset", "yaw-offset", "pwm"] {
        ok(d, &["eval", "--expert", "--role", role, "--all-logs", "--no-plot", "--out", "e"]);
        let csv = fs::read_to_string(d.join("e/eval.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let rmse: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
            assert_eq!(rmse, 0.0, "{role}: {line}");
        }
    }
}

#[test]
fn gen_data_is_deterministic_and_config_files_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("gen.txt"), "# toy run\nminutes: 0.5\nseed: 11\nlog_seconds: 15\nout: a\n").unwrap();
    ok(d, &["gen-data", "--config", "gen.txt"]);
    ok(d, &["gen-data", "--config", "gen.txt", "--out", "b"]);
    ok(d, &["gen-data", "--config", "gen.txt", "--out", "c", "--seed", "12"]);
    let read = |dir: &str| {
        let mut files: Vec<_> = fs::read_dir(d.join(dir)).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(read("a").len(), 2);
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = run(d, &["gen-data", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!run(d, &[]).status.success());
    assert!(!run(d, &["train", "--data", "missing"]).status.success());
    assert!(!run(d, &["eval", "--expert"]).status.success());
    fs::write(d.join("bad.txt"), "colour: red\n").unwrap();
    assert!(!run(d, &["gen-data", "--config", "bad.txt"]).status.success());
}
