use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorreg"))
        .args(args)
        .env_remove("TENSORREG_SEED")
        .output()
        .expect("binary runs")
}

fn json_line(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    serde_json::from_str(stdout.trim()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_interpolates_noiseless_fixture_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (fixture("noiseless_x.csv"), fixture("noiseless_y.dten"));
    let a = dir.path().join("a.holrr");
    let b = dir.path().join("b.holrr");
    for m in [&a, &b] {
        let v = json_line(&run(&["fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,2,2", "--gamma", "0", "-o", s(m)]));
        assert!(v["train_rmse"].as_f64().unwrap() <= 1e-7, "{v}");
        assert_eq!(v["ranks"], serde_json::json!([3, 2, 2]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let k = dir.path().join("k.holrr");
    let v = json_line(&run(&[
        "fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,2,2", "--gamma", "1e-6", "--kernel", "linear", "-o", s(&k),
    ]));
    assert!(v["train_rmse"].as_f64().unwrap() <= 1e-4, "{v}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (fixture("noiseless_x.csv"), fixture("noiseless_y.dten"));
    let m = dir.path().join("m.holrr");
    let cases: Vec<Vec<&str>> = vec![
        vec!["fit", "--x", s(&x), "--y", s(&y), "-o", s(&m)],
        vec!["fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,x", "-o", s(&m)],
        vec!["fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,2", "-o", s(&m)],
        vec!["fit", "--x", "/no/such.csv", "--y", s(&y), "--ranks", "3,2,2", "-o", s(&m)],
        vec!["fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,2,2", "--kernel", "cosine", "-o", s(&m)],
        vec!["experiment", "nope"],
        vec!["predict", "--model", s(&x), "--x", s(&x), "-o", s(&m)],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    assert!(!m.exists(), "no partial output on error");
}

#[test]
fn predict_zero_vector_gives_zero_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.holrr");
    let (x, y) = (fixture("noiseless_x.csv"), fixture("noiseless_y.dten"));
    json_line(&run(&["fit", "--x", s(&x), "--y", s(&y), "--ranks", "3,2,2", "-o", s(&m)]));
    let zero = dir.path().join("zero.csv");
    std::fs::write(&zero, "0,0,0,0,0,0\n").unwrap();
    let out = dir.path().join("pred.dten");
    let v = json_line(&run(&["predict", "--model", s(&m), "--x", s(&zero), "-o", s(&out)]));
    assert_eq!(v["shape"], serde_json::json!([1, 4, 5]));
    let info = json_line(&run(&["tensor", "inspect", s(&out)]));
    assert_eq!(info["frobenius_norm"].as_f64(), Some(0.0));
    assert_eq!(info["shape"], serde_json::json!([1, 4, 5]));
}

#[test]
fn tensor_convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("x.dten");
    let c = dir.path().join("x.csv");
    json_line(&run(&["tensor", "convert", s(&fixture("noiseless_x.csv")), s(&d)]));
    json_line(&run(&["tensor", "convert", s(&d), s(&c)]));
    let a = json_line(&run(&["tensor", "inspect", s(&fixture("noiseless_x.csv"))]));
    let b = json_line(&run(&["tensor", "inspect", s(&c)]));
    assert_eq!(a["frobenius_norm"], b["frobenius_norm"]);
    let out = run(&["tensor", "convert", s(&fixture("noiseless_y.dten")), s(&dir.path().join("y.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn image_experiment_writes_pictures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("img");
    let v = json_line(&run(&[
        "experiment", "image", "--image", s(&fixture("cross.ppm")), "--task", "channels", "--timing-repeats", "0",
        "-o", s(&out),
    ]));
    assert_eq!(v["records"], 8);
    for f in ["report.csv", "report.json", "channels_truth.ppm", "channels_rls.ppm", "channels_lrr_1.ppm", "channels_holrr_3_1_1.ppm"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let best = |prefix: &str| -> f64 {
        csv.lines()
            .skip(1)
            .filter(|l| l.split(',').nth(1).is_some_and(|m| m.starts_with(prefix)))
            .map(|l| l.split(',').nth(7).unwrap().parse::<f64>().unwrap())
            .fold(f64::INFINITY, f64::min)
    };
    assert!(best("holrr") < best("lrr"), "{csv}");
}

#[test]
fn experiment_flags_override_config_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"sizes": [10], "trials": 1, "n_test": 3, "input_dim": 3, "output_shape": [2, 3],
            "ranks": [2, 2, 2], "gammas": [0.1], "timing_repeats": 0, "methods": ["rls", "holrr"]}"#,
    )
    .unwrap();
    let seed_of = |out: &Path| -> String {
        let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
        csv.lines().nth(1).unwrap().split(',').nth(6).unwrap().to_string()
    };
    let exp = |out: &Path, extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_tensorreg"));
        c.args(["experiment", "synth-linear", "--config", s(&cfg), "-o", s(out)]).args(extra);
        match env {
            Some(e) => c.env("TENSORREG_SEED", e),
            None => c.env_remove("TENSORREG_SEED"),
        };
        json_line(&c.output().unwrap())
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let d = dir.path().join("d");
    exp(&a, &[], Some("5"));
    exp(&b, &["--seed", "5"], None);
    exp(&c, &[], None);
    let v = exp(&d, &["--methods", "lrr"], Some("5"));
    assert_eq!(std::fs::read(a.join("report.csv")).unwrap(), std::fs::read(b.join("report.csv")).unwrap());
    assert_ne!(seed_of(&a), seed_of(&c));
    assert_eq!(v["records"], 1);
    let out = run(&["experiment", "synth-linear", "--config", s(&cfg), "--task", "height", "-o", s(&d)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_met_builds_dataset_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("met");
    std::fs::create_dir(&data).unwrap();
    for (name, text) in tensorreg::harness::synthetic_station_files(16, (1960, 1965), 1) {
        std::fs::write(data.join(name), text).unwrap();
    }
    let out = dir.path().join("ds");
    let v = json_line(&run(&["ingest-met", "--data-dir", s(&data), "--horizon", "5", "--years", "1960,1965", "-o", s(&out)]));
    assert_eq!(v["y_shape"].as_array().unwrap()[1..], serde_json::json!([5, 16, 5]).as_array().unwrap()[..]);
    assert_eq!(v["x_shape"][1], 160);
    let x = json_line(&run(&["tensor", "inspect", s(&out.join("x.dten"))]));
    assert_eq!(x["shape"][1], 160);
    let bad = run(&["ingest-met", "--data-dir", s(&data), "--stations", "station00,missing", "-o", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("missing"));
}
