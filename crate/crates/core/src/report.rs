//! Report serialization, curve export and overlay rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::active::SegmentModel;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::Frame;
use crate::motion::{EchoLabel, Gate, SegmentLabel, ANALYZED_SEGMENTS};
use crate::pipeline::EchoReport;

pub const SCHEMA_VERSION: u32 = 1;

pub const CURVES_HEADER: [&str; 7] = ["frame", "seg1", "seg2", "seg3", "seg5", "seg6", "seg7"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: u8,
    pub ratio: Option<f64>,
    pub label: SegmentLabel,
}

/// The on-disk report of one echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: u32,
    pub id: String,
    pub lvef: f64,
    pub gate: Gate,
    pub echo_label: EchoLabel,
    pub segments: Vec<SegmentEntry>,
    /// Segment id (as a string key) to the frame of maximum displacement.
    pub max_frames: BTreeMap<String, usize>,
    /// Stage name to summed milliseconds, plus `total`.
    pub timing_ms: BTreeMap<String, f64>,
}

impl ReportDocument {
    /// Fails with `Unprocessable` when the echo produced no diagnosis.
    pub fn from_echo(report: &EchoReport) -> Result<Self> {
        let diagnosis = report.require_diagnosis()?;
        let t = &report.timing_ms;
        let timing_ms = [
            ("ridge", t.ridge),
            ("wall", t.wall),
            ("snake", t.snake),
            ("active_polynomials", t.active_polynomials),
            ("segments", t.segments),
            ("total", t.total()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Ok(ReportDocument {
            schema: SCHEMA_VERSION,
            id: report.id.clone(),
            lvef: diagnosis.lvef,
            gate: diagnosis.gate,
            echo_label: diagnosis.echo_label,
            segments: diagnosis
                .verdicts
                .iter()
                .map(|v| SegmentEntry {
                    id: v.segment_id,
                    ratio: v.ratio,
                    label: v.label,
                })
                .collect(),
            max_frames: report.max_frames().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            timing_ms,
        })
    }

    pub fn segment_label(&self, id: u8) -> Option<SegmentLabel> {
        self.segments.iter().find(|s| s.id == id).map(|s| s.label)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Validation(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDocument =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed report: {e}")))?;
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "report schema {} not supported (expected {SCHEMA_VERSION})",
                doc.schema
            )));
        }
        Ok(doc)
    }
}

pub fn read_report(path: &Path) -> Result<ReportDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ReportDocument::from_json(&text).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// One row per processed frame: the frame index and the displacement of
/// each analyzed segment.
pub fn curves_csv(report: &EchoReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("curves CSV: {e}"));
    w.write_record(CURVES_HEADER).map_err(csv_err)?;
    for (row, model) in report.models.iter().enumerate() {
        let mut record = vec![model.frame_index.to_string()];
        for id in ANALYZED_SEGMENTS {
            let value = report
                .curves
                .iter()
                .find(|c| c.segment_id == id)
                .and_then(|c| c.values.get(row))
                .copied()
                .unwrap_or(f64::NAN);
            record.push(value.to_string());
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(format!("curves CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
}

/// Parses a curves CSV back into `(frame, [seg1, seg2, seg3, seg5, seg6, seg7])` rows.
pub fn parse_curves_csv(text: &str) -> Result<Vec<(usize, [f64; 6])>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |m: String| Error::Validation(format!("curves CSV: {m}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CURVES_HEADER) {
        return Err(bad(format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let frame = record[0].parse().map_err(|e| bad(format!("frame column: {e}")))?;
        let mut values = [0.0; 6];
        for (k, v) in values.iter_mut().enumerate() {
            *v = record[k + 1].parse().map_err(|e| bad(format!("column {}: {e}", k + 1)))?;
        }
        rows.push((frame, values));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn report_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.report.json"))
}

pub fn curves_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.curves.csv"))
}

/// Write to a sibling temporary and rename, so readers never see half a file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn emit_report(report: &EchoReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        let (path, text) = match format {
            ReportFormat::Json => (report_path(dir, &report.id), ReportDocument::from_echo(report)?.to_json()?),
            ReportFormat::Csv => (curves_path(dir, &report.id), curves_csv(report)?),
        };
        write_atomic(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Segment colors, indexed by segment id − 1.
pub const PALETTE: [[u8; 3]; 7] = [
    [230, 25, 75],
    [245, 130, 48],
    [255, 225, 25],
    [60, 180, 75],
    [70, 240, 240],
    [0, 130, 200],
    [240, 50, 230],
];

pub const GHOST: [u8; 3] = [128, 128, 128];

fn draw_polyline(img: &mut RgbImage, pts: &[Point], color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut plot = |p: Point| {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    };
    if let [only] = pts {
        plot(*only);
    }
    for pair in pts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let steps = (2.0 * a.distance(b)).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            plot(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
        }
    }
}

/// The frame in RGB with every segment drawn in its palette color. With
/// `ghost`, that model (normally end-diastole) is drawn underneath in gray
/// so a displacement snapshot shows where the wall started.
pub fn render_overlay(frame: &Frame, model: &SegmentModel, ghost: Option<&SegmentModel>) -> RgbImage {
    let mut img = RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = frame.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    if let Some(g) = ghost {
        for seg in &g.segments {
            draw_polyline(&mut img, seg, GHOST);
        }
    }
    for (k, seg) in model.segments.iter().enumerate() {
        draw_polyline(&mut img, seg, PALETTE[k % PALETTE.len()]);
    }
    img
}

pub fn write_overlay(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn model() -> SegmentModel {
        let segments = (0..7)
            .map(|k| {
                let x = 10.0 + 10.0 * k as f64;
                vec![Point::new(x, 10.0), Point::new(x + 5.0, 40.0)]
            })
            .collect();
        SegmentModel {
            frame_index: 0,
            segments,
        }
    }

    fn colors(img: &RgbImage) -> HashSet<[u8; 3]> {
        img.pixels().map(|p| p.0).collect()
    }

    #[test]
    fn black_frame_shows_palette_and_black_only() {
        let frame = Frame::filled(100, 60, 0);
        let found = colors(&render_overlay(&frame, &model(), None));
        let mut expected: HashSet<[u8; 3]> = PALETTE.into_iter().collect();
        expected.insert([0, 0, 0]);
        assert_eq!(found, expected);
    }

    #[test]
    fn ghost_appears_only_when_given() {
        let frame = Frame::filled(100, 60, 0);
        let m = model();
        let ghost = m.scaled(0.5);
        assert!(!colors(&render_overlay(&frame, &m, None)).contains(&GHOST));
        assert!(colors(&render_overlay(&frame, &m, Some(&ghost))).contains(&GHOST));
    }

    #[test]
    fn rendering_is_deterministic() {
        let frame = Frame::from_fn(100, 60, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let a = render_overlay(&frame, &model(), None);
        let b = render_overlay(&frame, &model(), None);
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn off_frame_points_are_clipped() {
        let frame = Frame::filled(20, 20, 0);
        let m = SegmentModel {
            frame_index: 0,
            segments: vec![vec![Point::new(-50.0, -50.0), Point::new(70.0, 70.0)]; 7],
        };
        let img = render_overlay(&frame, &m, None);
        assert_eq!(img.dimensions(), (20, 20));
    }

    #[test]
    fn json_rejects_other_schema() {
        let doc = ReportDocument {
            schema: SCHEMA_VERSION,
            id: "e".into(),
            lvef: 0.4,
            gate: Gate::MotionAnalysis,
            echo_label: EchoLabel::Normal,
            segments: vec![],
            max_frames: BTreeMap::new(),
            timing_ms: BTreeMap::new(),
        };
        let text = doc.to_json().unwrap();
        assert_eq!(ReportDocument::from_json(&text).unwrap(), doc);
        let v2 = text.replace("\"schema\": 1", "\"schema\": 2");
        assert!(ReportDocument::from_json(&v2).is_err());
    }
}
