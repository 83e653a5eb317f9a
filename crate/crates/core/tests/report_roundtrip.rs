use std::fs;

use activepoly::motion::ANALYZED_SEGMENTS;
use activepoly::report::{curves_path, parse_curves_csv, read_report, report_path, CURVES_HEADER};
use activepoly::{
    emit_report, generate_phantom, load_sequence, process_echo, EchoReport, PhantomConfig, PipelineConfig,
    ReportDocument, ReportFormat,
};

fn small_phantom(id: &str, frozen_slot: Option<usize>) -> PhantomConfig {
    let mut cfg = PhantomConfig {
        id: id.into(),
        width: 318,
        height: 211,
        frames: 8,
        contraction_amplitude: 0.4,
        seed: 7,
        ..PhantomConfig::default()
    };
    if let Some(k) = frozen_slot {
        cfg.per_segment_motion_scale[k] = 0.0;
    }
    cfg
}

fn analyzed(cfg: &PhantomConfig) -> EchoReport {
    let (seq, _) = generate_phantom(cfg).unwrap();
    process_echo(&seq, &PipelineConfig::default()).unwrap()
}

#[test]
fn json_and_csv_survive_a_round_trip() {
    let report = analyzed(&small_phantom("rt", Some(2)));
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&report, dir.path(), &[ReportFormat::Json, ReportFormat::Csv]).unwrap();
    assert_eq!(written, vec![report_path(dir.path(), "rt"), curves_path(dir.path(), "rt")]);

    let doc = read_report(&written[0]).unwrap();
    assert_eq!(doc, ReportDocument::from_echo(&report).unwrap());
    let ids: Vec<u8> = doc.segments.iter().map(|s| s.id).collect();
    assert_eq!(ids, ANALYZED_SEGMENTS.to_vec());
    assert!(!doc.max_frames.contains_key("4"));
    assert!(doc.timing_ms["total"] > 0.0);

    let text = fs::read_to_string(&written[1]).unwrap();
    assert!(text.starts_with(&CURVES_HEADER.join(",")));
    let rows = parse_curves_csv(&text).unwrap();
    assert_eq!(rows.len(), report.processed());
    for (row, (frame, values)) in rows.iter().enumerate() {
        assert_eq!(*frame, report.models[row].frame_index);
        for (k, &id) in ANALYZED_SEGMENTS.iter().enumerate() {
            let curve = report.curves.iter().find(|c| c.segment_id == id).unwrap();
            assert_eq!(values[k], curve.values[row]);
        }
    }
    // nothing half-written is left behind
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "partial"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn written_phantom_analyzes_like_the_in_memory_one() {
    let cfg = small_phantom("disk", None);
    let (seq, truth) = generate_phantom(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    activepoly::phantom::write_sequence(&seq, &truth, dir.path()).unwrap();
    let loaded = load_sequence(dir.path(), &dir.path().join(activepoly::imaging::LANDMARKS_FILE)).unwrap();
    let a = process_echo(&seq, &PipelineConfig::default()).unwrap();
    let b = process_echo(&loaded, &PipelineConfig::default()).unwrap();
    assert_eq!(a.models, b.models);
    assert_eq!(a.diagnosis, b.diagnosis);
}

#[test]
fn frozen_segment_is_reported_infarcted() {
    for (slot, &id) in ANALYZED_SEGMENTS.iter().enumerate() {
        let cfg = small_phantom(&format!("frozen{id}"), Some(slot));
        let (_, truth) = generate_phantom(&cfg).unwrap();
        let doc = ReportDocument::from_echo(&analyzed(&cfg)).unwrap();
        for seg in ANALYZED_SEGMENTS {
            assert_eq!(doc.segment_label(seg), truth.segment_labels.get(&seg).copied(), "frozen {id}, segment {seg}");
        }
    }
}
