use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const PROFILE: &str = "name=tiny\nsequences=5\nframes=8\nwidth=160\nheight=120\n\n[scene]\nnoise_sigma=4\n";

fn fusedet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusedet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

/// A tiny dataset and two short training runs shared by every test.
struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    three: PathBuf,
    visible: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let profile = root.join("tiny.txt");
        fs::write(&profile, PROFILE).unwrap();
        let data = root.join("data");
        let o = fusedet(&["synth", "--profile", s(&profile), "--out", s(&data), "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut weights = Vec::new();
        for mode in ["three-channel", "visible"] {
            let out = root.join(format!("train-{mode}"));
            let o = fusedet(&["train", "--mode", mode, "--data", s(&data), "--iters", "20", "--out-dir", s(&out)]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            weights.push(out.join("weights.bin"));
        }
        Fixture {
            _tmp: tmp,
            three: weights[0].clone(),
            visible: weights[1].clone(),
            root,
            data,
        }
    })
}

fn out(name: &str) -> PathBuf {
    let dir = fixture().root.join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn synth_writes_dataset_and_manifest() {
    let f = fixture();
    assert!(f.data.join("manifest.txt").is_file());
    let m = manifest(&f.data);
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["details"]["sequences"], 5);
}

#[test]
fn builtin_profile_by_name() {
    let dir = out("synth-builtin");
    let o = fusedet(&["synth", "--profile", "nope", "--out", s(&dir)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn train_writes_checkpoint_log_and_config() {
    let dir = fixture().three.parent().unwrap().to_path_buf();
    for f in ["weights.bin", "train_log.csv", "config.txt", "run.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(dir.join("train_log.csv")).unwrap();
    assert!(log.contains("iteration,l_cls,l_bbox,lr"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 21);
    let m = manifest(&dir);
    assert_eq!(m["config"]["iterations"], "20");
    assert_eq!(m["seed"], 0);
}

#[test]
fn training_is_bit_reproducible() {
    let f = fixture();
    let dir = out("train-again");
    let o = fusedet(&["train", "--mode", "three-channel", "--data", s(&f.data), "--iters", "20", "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(dir.join("weights.bin")).unwrap(), fs::read(&f.three).unwrap());
    let first = f.three.parent().unwrap().join("train_log.csv");
    assert_eq!(fs::read(dir.join("train_log.csv")).unwrap(), fs::read(first).unwrap());
}

#[test]
fn detect_then_evaluate() {
    let f = fixture();
    let det = out("detect");
    let o = fusedet(&["detect", "--mode", "three-channel", "--data", s(&f.data), "--weights", s(&f.three), "--out-dir", s(&det), "--overlay"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dets = fs::read_to_string(det.join("dets.csv")).unwrap();
    assert!(dets.starts_with("image_id,x,y,w,h,score"));
    assert!(det.join("overlays").is_dir());

    let ev = out("evaluate");
    let o = fusedet(&["evaluate", "--dets", s(&det.join("dets.csv")), "--gt", s(&f.data), "--plot", "pr.svg", "--out-dir", s(&ev)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(ev.join("report.csv")).unwrap().starts_with("mode,ap,top1"));
    assert!(fs::read_to_string(ev.join("pr.svg")).unwrap().contains("<svg"));
    let ap = manifest(&ev)["details"]["ap"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ap));
}

#[test]
fn evaluate_rejects_unknown_images() {
    let f = fixture();
    let dir = out("evaluate-bad");
    fs::create_dir_all(&dir).unwrap();
    let dets = dir.join("dets.csv");
    fs::write(&dets, "image_id,x,y,w,h,score\nnowhere/000005,1,2,3,4,0.5\n").unwrap();
    let o = fusedet(&["evaluate", "--dets", s(&dets), "--gt", s(&f.data), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nowhere/000005"));
    assert!(manifest(&dir)["status"].as_str().unwrap().starts_with("error"));
}

#[test]
fn benchmark_subset_gives_two_rows() {
    let f = fixture();
    let dir = out("bench");
    let o = fusedet(&[
        "benchmark", "--data", s(&f.data), "--mode", "visible", "--mode", "three-channel",
        "--weights", &format!("visible={}", s(&f.visible)),
        "--weights", &format!("three-channel={}", s(&f.three)),
        "--out-dir", s(&dir),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("3-Channels"));
}

#[test]
fn benchmark_names_missing_weights() {
    let f = fixture();
    let dir = out("bench-missing");
    let o = fusedet(&[
        "benchmark", "--data", s(&f.data), "--mode", "decision",
        "--weights", &format!("visible={}", s(&f.visible)),
        "--out-dir", s(&dir),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("decision (needs mwir, motion)"), "{err}");
}

#[test]
fn propose_writes_csv_per_image() {
    let f = fixture();
    let dir = out("propose");
    let o = fusedet(&["propose", "--data", s(&f.data), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(dir.join("proposals.csv")).unwrap();
    let first = summary.lines().nth(1).unwrap().split(',').next().unwrap();
    let csv = fs::read_to_string(dir.join("proposals").join(format!("{first}.csv"))).unwrap();
    assert!(csv.starts_with("x,y,w,h"));
}

#[test]
fn dump_features_writes_maps() {
    let f = fixture();
    let dir = out("features");
    let o = fusedet(&[
        "dump-features", "--data", s(&f.data), "--mode", "three-channel", "--weights", s(&f.three),
        "--layer", "conv1", "--limit", "1", "--out-dir", s(&dir),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(dir.join("features")).unwrap().collect();
    assert!(!files.is_empty());
}

#[test]
fn wrong_architecture_weights_are_config_errors() {
    let f = fixture();
    let dir = out("full-arch");
    let o = fusedet(&["--preset", "full", "detect", "--mode", "three-channel", "--data", s(&f.data), "--weights", s(&f.three), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let o = fusedet(&["train", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    let o = fusedet(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&fusedet(&["--help"])), 0);
}

#[test]
fn bad_config_and_missing_data_exit_one() {
    let f = fixture();
    let dir = out("bad-config");
    fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("c.txt");
    fs::write(&cfg, "warp_drive=9\n").unwrap();
    let o = fusedet(&["--config", s(&cfg), "propose", "--data", s(&f.data), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("warp_drive"));
    let o = fusedet(&["train", "--mode", "mwir", "--data", s(&dir.join("absent")), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 1);
    let o = fusedet(&["train", "--mode", "decision", "--data", s(&f.data), "--out-dir", s(&dir)]);
    assert_eq!(code(&o), 1);
}
