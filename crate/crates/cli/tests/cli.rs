use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn prdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prdlab")).args(args).env_remove("PRDLAB_OUT_DIR").output().expect("spawn prdlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn listed_outputs(m: &Value) -> Vec<PathBuf> {
    m["outputs"].as_array().unwrap().iter().map(|r| PathBuf::from(r["path"].as_str().unwrap())).collect()
}

/// Runs `args` into `first`, reruns from its manifest into `second` and compares every CSV and PGM.
fn assert_rerun_identical(args: &[&str], first: &Path, second: &Path) {
    let mut a: Vec<&str> = args.to_vec();
    let f = first.to_str().unwrap();
    a.extend(["--out-dir", f]);
    let o = prdlab(&a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let cmd = args[0];
    let m = first.join("manifest.json");
    let o = prdlab(&[cmd, "--config", m.to_str().unwrap(), "--out-dir", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let m1 = manifest(first);
    let m2 = manifest(second);
    assert_eq!(m1["config"], m2["config"]);
    let outputs = listed_outputs(&m1);
    assert_eq!(outputs, listed_outputs(&m2));
    let mut compared = 0;
    for p in outputs {
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or_default();
        if ext == "csv" || ext == "pgm" {
            assert_eq!(fs::read(first.join(&p)).unwrap(), fs::read(second.join(&p)).unwrap(), "{}", p.display());
            compared += 1;
        }
    }
    assert!(compared > 0);
}

#[test]
fn help_exits_zero() {
    let o = prdlab(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("simulate"));
    assert_eq!(code(&prdlab(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&prdlab(&["frobnicate"])), 1);
    assert_eq!(code(&prdlab(&[])), 1);
    assert_eq!(code(&prdlab(&["simulate", "--no-such-flag"])), 1);
    assert_eq!(code(&prdlab(&["train", "--mode", "both"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&prdlab(&["simulate", "--model", "gs", "--preset", "paper-9", "--out-dir", d])), 1);
    assert_eq!(code(&prdlab(&["simulate", "--model", "turing", "--feed", "0.1", "--out-dir", d])), 1);
    assert_eq!(code(&prdlab(&["simulate", "--dt", "-1", "--out-dir", d])), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.ckpt");
    let o = prdlab(&["featviz", "--checkpoint", missing.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"stepz": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = prdlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_turing_paper_preset_writes_snapshots_stats_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = prdlab(&["simulate", "--model", "turing", "--preset", "paper", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"], "simulate");
    let model = &m["config"]["model"];
    assert_eq!(model["model"], "turing");
    for (k, v) in [
        ("a", 1.0),
        ("b", -1.0),
        ("c", 3.0),
        ("d", -1.5),
        ("h", 1.0),
        ("k", 1.0),
        ("mu", 1e-4),
        ("nu", 6e-4),
        ("dt", 0.02),
    ] {
        assert_eq!(model[k].as_f64(), Some(v), "{k}");
    }
    let outputs = listed_outputs(&m);
    assert!(outputs.contains(&PathBuf::from("stats.csv")));
    assert_eq!(outputs.iter().filter(|p| p.extension().is_some_and(|e| e == "pgm")).count(), 22);
    // every listed file exists with the recorded size, and nothing else was written
    let mut on_disk: Vec<PathBuf> = fs::read_dir(&out)
        .unwrap()
        .map(|e| PathBuf::from(e.unwrap().file_name()))
        .filter(|p| p != Path::new("manifest.json"))
        .collect();
    on_disk.sort();
    let mut listed = outputs.clone();
    listed.sort();
    assert_eq!(on_disk, listed);
    for r in m["outputs"].as_array().unwrap() {
        let len = fs::metadata(out.join(r["path"].as_str().unwrap())).unwrap().len();
        assert_eq!(r["bytes"].as_u64(), Some(len));
    }
    let pgm = fs::read(out.join("u_010000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n100 100\n255\n"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"steps": 40, "snapshot_every": 20, "height": 12, "width": 12}"#).unwrap();
    let out = dir.path().join("out");
    let o =
        prdlab(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "60", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["steps"], 60);
    assert_eq!(m["config"]["height"], 12);
    assert_eq!(m["config"]["snapshot_every"], 20);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_prdlab"))
        .args(["simulate", "--steps", "10", "--snapshot-every", "10", "--height", "8", "--width", "8"])
        .env("PRDLAB_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn simulate_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    assert_rerun_identical(
        &[
            "simulate",
            "--model",
            "gs",
            "--preset",
            "paper-3",
            "--steps",
            "300",
            "--snapshot-every",
            "100",
            "--height",
            "40",
            "--width",
            "40",
        ],
        &dir.path().join("a"),
        &dir.path().join("b"),
    );
    let dir = tempfile::tempdir().unwrap();
    assert_rerun_identical(
        &["simulate", "--steps", "300", "--snapshot-every", "150", "--amplitude", "0.1", "--seed", "7"],
        &dir.path().join("a"),
        &dir.path().join("b"),
    );
}

#[test]
fn data_commands_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    assert_rerun_identical(
        &["gen-data", "--n-total", "50", "--n-train", "40", "--labels", "one-hot"],
        &dir.path().join("a"),
        &dir.path().join("b"),
    );
    let dir = tempfile::tempdir().unwrap();
    assert_rerun_identical(
        &["verify-bounds", "--width", "256", "--epochs", "300", "--log-every", "50"],
        &dir.path().join("a"),
        &dir.path().join("b"),
    );
}

#[test]
fn train_gram_featviz_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    assert_rerun_identical(
        &[
            "train",
            "--mode",
            "adv",
            "--width",
            "128",
            "--epochs",
            "30",
            "--batch-size",
            "64",
            "--n-total",
            "160",
            "--n-train",
            "128",
            "--d-in",
            "16",
            "--manifold-dim",
            "12",
        ],
        &train,
        &dir.path().join("train2"),
    );
    let m = manifest(&train);
    assert!(listed_outputs(&m).contains(&PathBuf::from("critic.ckpt")));
    assert_eq!(
        fs::read(train.join("generator.ckpt")).unwrap(),
        fs::read(dir.path().join("train2").join("generator.ckpt")).unwrap()
    );

    let ckpt = train.join("generator.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    assert_rerun_identical(
        &[
            "gram",
            "--width",
            "128",
            "--mc-samples",
            "2048",
            "--checkpoint",
            ckpt,
            "--n-total",
            "160",
            "--n-train",
            "128",
            "--d-in",
            "16",
            "--manifold-dim",
            "12",
        ],
        &dir.path().join("gram"),
        &dir.path().join("gram2"),
    );
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("gram").join("gram_report.json")).unwrap()).unwrap();
    assert!(report["stability"].is_object());
    assert!(manifest(&dir.path().join("gram"))["inputs"].as_array().unwrap().len() == 1);

    assert_rerun_identical(
        &["featviz", "--checkpoint", ckpt, "--top-k", "4", "--image-height", "4"],
        &dir.path().join("fv"),
        &dir.path().join("fv2"),
    );
    let fv = listed_outputs(&manifest(&dir.path().join("fv")));
    assert_eq!(fv.iter().filter(|p| p.to_str().unwrap().starts_with("weight_")).count(), 4);
    assert_eq!(fv.iter().filter(|p| p.to_str().unwrap().starts_with("ascent_")).count(), 4);
}

#[test]
fn idx_input_is_hashed_into_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut images = Vec::new();
    for v in [0x0000_0803u32, 6, 2, 2] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend((0..24u8).map(|b| b * 10));
    let mut labels = Vec::new();
    for v in [0x0000_0801u32, 6] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend([0u8, 1, 2, 3, 4, 5]);
    let (i, l) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    fs::write(&i, images).unwrap();
    fs::write(&l, labels).unwrap();
    let out = dir.path().join("out");
    let o = prdlab(&[
        "gen-data",
        "--idx-images",
        i.to_str().unwrap(),
        "--idx-labels",
        l.to_str().unwrap(),
        "--idx-train",
        "4",
        "--idx-test",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["inputs"].as_array().unwrap().len(), 2);
    let o = prdlab(&[
        "gen-data",
        "--idx-images",
        i.to_str().unwrap(),
        "--idx-labels",
        l.to_str().unwrap(),
        "--idx-train",
        "7",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}
