//! End-to-end runs of the `mafaae` binary on a small configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5
train_normal = 12

[synth]
num_normal = 20
num_anomalous = 9

[train]
epochs = 2
"#;

struct Workdir {
    dir: TempDir,
    config: PathBuf,
}

impl Workdir {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, config).unwrap();
        Self { dir, config: path }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mafaae"))
            .arg("--config")
            .arg(&self.config)
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    /// gen-data, train and calibrate into `ck.bin`.
    fn pipeline(&self) {
        self.ok(&["gen-data", "--out-dir", &self.s("data")]);
        self.ok(&[
            "train",
            "--data",
            &self.s("data/train.csv"),
            "--out",
            &self.s("ck.bin"),
            "--log",
            &self.s("log.jsonl"),
        ]);
        self.ok(&["calibrate", "--checkpoint", &self.s("ck.bin"), "--data", &self.s("data/train.csv")]);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn gen_data_is_deterministic_and_matches_manifest() {
    let w = Workdir::new(SMALL);
    w.ok(&["gen-data", "--out-dir", &w.s("a"), "--seed", "7"]);
    w.ok(&["gen-data", "--out-dir", &w.s("b"), "--seed", "7"]);
    for f in ["train.csv", "test.csv", "train.manifest.json", "test.manifest.json"] {
        assert_eq!(read(&w.path("a").join(f)), read(&w.path("b").join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&w.path("a/test.manifest.json"))).unwrap();
    assert_eq!(manifest["n_signals"], 12);
    assert_eq!(manifest["n_records"], 17);
}

#[test]
fn invalid_input_exits_with_two() {
    let bad_kind = Workdir::new("[synth]\nanomaly_kinds = [\"wobble\"]\n");
    let out = bad_kind.run(&["gen-data", "--out-dir", &bad_kind.s("d")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));

    let unknown_key = Workdir::new("sede = 3\n");
    assert_eq!(code(&unknown_key.run(&["gen-data", "--out-dir", &unknown_key.s("d")])), 2);

    let w = Workdir::new(SMALL);
    w.ok(&["gen-data", "--out-dir", &w.s("data")]);
    let anomalous_train = w.run(&["train", "--data", &w.s("data/test.csv"), "--out", &w.s("x.bin")]);
    assert_eq!(code(&anomalous_train), 2);
    assert!(!w.path("x.bin").exists());

    // a missing input is invalid input, not a runtime failure
    let missing = w.run(&["train", "--data", &w.s("nope.csv"), "--out", &w.s("x.bin")]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn full_workflow() {
    let w = Workdir::new(SMALL);
    w.pipeline();

    // training is reproducible from the same config
    w.ok(&["train", "--data", &w.s("data/train.csv"), "--out", &w.s("again.bin")]);
    w.ok(&["calibrate", "--checkpoint", &w.s("again.bin"), "--data", &w.s("data/train.csv")]);
    assert_eq!(read(&w.path("ck.bin")), read(&w.path("again.bin")));
    assert_eq!(fs::read_to_string(w.path("log.jsonl")).unwrap().lines().count(), 2);

    // evaluation report
    w.ok(&["eval", "--checkpoint", &w.s("ck.bin"), "--data", &w.s("data/test.csv"), "--out", &w.s("r1.json"), "--roc"]);
    w.ok(&[
        "eval",
        "--checkpoint",
        &w.s("ck.bin"),
        "--data",
        &w.s("data/test.csv"),
        "--out",
        &w.s("r2.json"),
        "--roc-csv",
        &w.s("roc.csv"),
    ]);
    let r1: serde_json::Value = serde_json::from_slice(&read(&w.path("r1.json"))).unwrap();
    assert_eq!(r1["per_type"].as_object().unwrap().len(), 3);
    assert_eq!(r1["n_records"], 17);
    assert!(r1["roc_points"].is_array());
    assert_eq!(r1["run_config"]["seed"], 5);
    let r2: serde_json::Value = serde_json::from_slice(&read(&w.path("r2.json"))).unwrap();
    assert_eq!(r1["overall_mean"], r2["overall_mean"]);
    assert!(fs::read_to_string(w.path("roc.csv")).unwrap().starts_with("threshold,fpr,tpr\n"));

    // detection on a replayed record
    let test = mafaae::data::load_records(&w.path("data/test.csv")).unwrap();
    let record = &test.records[0];
    let mut lines = String::new();
    for t in 0..record.len() {
        let row: Vec<String> = record.frames.row(t).iter().map(|v| v.to_string()).collect();
        lines.push_str(&format!("{t},{}\n", row.join(",")));
    }
    fs::write(w.path("stream.csv"), &lines).unwrap();
    let no_threshold = w.run(&["detect", "--checkpoint", &w.s("ck.bin"), "--input", &w.s("stream.csv")]);
    assert_eq!(code(&no_threshold), 2);
    let out = w.ok(&["detect", "--checkpoint", &w.s("ck.bin"), "--input", &w.s("stream.csv"), "--target-fpr", "0.05"]);
    let verdicts: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(verdicts.len(), 4);
    assert_eq!(verdicts[3]["window_start"], 150);

    fs::write(w.path("bad.csv"), format!("{lines}300,1,2\n")).unwrap();
    let bad = w.run(&["detect", "--checkpoint", &w.s("ck.bin"), "--input", &w.s("bad.csv"), "--threshold", "3"]);
    assert_eq!(code(&bad), 2);

    // latency report
    w.ok(&["bench", "--checkpoint", &w.s("ck.bin"), "--out", &w.s("bench.json"), "--repetitions", "200"]);
    let bench: serde_json::Value = serde_json::from_slice(&read(&w.path("bench.json"))).unwrap();
    assert_eq!(bench["latency"]["timings_us"].as_array().unwrap().len(), 200);
    assert_eq!(bench["latency"]["threads"], 1);
    assert_eq!(bench["latency"]["windowing"]["window"], 150);
    assert_eq!(code(&w.run(&["bench", "--checkpoint", &w.s("ck.bin"), "--repetitions", "50"])), 2);
}

#[test]
fn uncalibrated_checkpoint_is_refused() {
    let w = Workdir::new(SMALL);
    w.ok(&["gen-data", "--out-dir", &w.s("data")]);
    w.ok(&["train", "--data", &w.s("data/train.csv"), "--out", &w.s("raw.bin")]);
    let eval =
        w.run(&["eval", "--checkpoint", &w.s("raw.bin"), "--data", &w.s("data/test.csv"), "--out", &w.s("r.json")]);
    assert_eq!(code(&eval), 2);
    assert!(String::from_utf8_lossy(&eval.stderr).contains("calibrate"));

    // calibration refuses anomalous records and too-short data
    let cal = w.run(&["calibrate", "--checkpoint", &w.s("raw.bin"), "--data", &w.s("data/test.csv")]);
    assert_eq!(code(&cal), 2);
    let short = w.run(&[
        "calibrate",
        "--checkpoint",
        &w.s("raw.bin"),
        "--data",
        &w.s("data/train.csv"),
        "--freq-downsample",
        "4",
    ]);
    assert_eq!(code(&short), 2);
}

#[test]
fn ablation_flag_changes_the_model() {
    let w = Workdir::new(SMALL);
    w.ok(&["gen-data", "--out-dir", &w.s("data")]);
    w.ok(&["train", "--data", &w.s("data/train.csv"), "--out", &w.s("nf.bin"), "--ablation", "no-flow"]);
    let ck = mafaae::model::load_checkpoint(&w.path("nf.bin")).unwrap();
    assert_eq!(ck.config.active_flow_layers(), 0);
    assert_eq!(ck.meta.run_config.unwrap()["ablation"], "no-flow");
    assert_eq!(
        code(&w.run(&["train", "--data", &w.s("data/train.csv"), "--out", &w.s("x.bin"), "--ablation", "bogus"])),
        2
    );
}
