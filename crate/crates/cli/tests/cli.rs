use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use activepoly::imaging::write_sequence_files;
use activepoly::{generate_phantom, EchoSequence, Frame, PhantomConfig};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activepoly")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn small(id: &str, frozen_slot: Option<usize>) -> serde_json::Value {
    let mut scales = [1.0; 6];
    if let Some(k) = frozen_slot {
        scales[k] = 0.0;
    }
    serde_json::json!({
        "id": id,
        "width": 318,
        "height": 211,
        "frames": 8,
        "contraction_amplitude": 0.4,
        "per_segment_motion_scale": scales,
        "seed": 3,
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn phantom_analyze_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("phantoms.json");
    fs::write(&config, serde_json::to_string(&[small("healthy", None), small("frozen", Some(1))]).unwrap()).unwrap();
    let echos = tmp.path().join("echos");
    let out = run(&["phantom", p(&config), "--out", p(&echos)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(echos.join("healthy").join("landmarks.json").is_file());
    assert!(echos.join("labels.json").is_file());

    let reports = tmp.path().join("reports");
    let out = run(&["analyze", p(&echos), "--out", p(&reports), "--overlay"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for id in ["healthy", "frozen"] {
        for suffix in ["report.json", "curves.csv", "overlay_ed.png", "overlay_peak.png"] {
            assert!(reports.join(format!("{id}.{suffix}")).is_file(), "{id}.{suffix}");
        }
    }
    let stdout = text(&out.stdout);
    assert!(stdout.contains("frozen: MI"), "{stdout}");
    assert!(stdout.contains("healthy: normal"), "{stdout}");

    let out = run(&["evaluate", p(&reports), p(&echos.join("labels.json"))]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = text(&out.stdout);
    assert!(table.starts_with("2 echos"), "{table}");
    let pooled = table.lines().find(|l| l.starts_with("pooled")).unwrap();
    let fields: Vec<&str> = pooled.split_whitespace().collect();
    // TP TN FP FN, then accuracy
    assert_eq!(&fields[1..6], ["1", "11", "0", "0", "1.0000"], "{table}");
}

#[test]
fn bad_config_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.json");
    fs::write(&config, "{\"threshold\": \"high\"}").unwrap();
    let out = run(&["analyze", p(tmp.path()), "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));

    fs::write(&config, "{\"width\": 318, \"height\": 211, \"wall_brightness\": 10}").unwrap();
    let out = run(&["phantom", p(&config), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn missing_echo_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["analyze", p(&tmp.path().join("nowhere"))]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn featureless_echo_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: PhantomConfig = serde_json::from_value(small("flat", None)).unwrap();
    let (_, truth) = generate_phantom(&cfg).unwrap();
    let frames = vec![Frame::filled(cfg.width, cfg.height, 40); 6];
    let seq = EchoSequence::new("flat", 25.0, truth.landmarks, frames).unwrap();
    let echo = tmp.path().join("flat");
    write_sequence_files(&seq, &echo).unwrap();
    let reports = tmp.path().join("reports");
    let out = run(&["analyze", p(&echo), "--out", p(&reports)]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    // curves are still written, the report is not
    assert!(reports.join("flat.curves.csv").is_file());
    assert!(!reports.join("flat.report.json").exists());
}
