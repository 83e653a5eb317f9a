//! Detection metrics over labeled batches of reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{EchoLabel, SegmentLabel, ANALYZED_SEGMENTS};
use crate::report::ReportDocument;

/// Hit/miss counts with "infarcted" (or MI) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub far: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricSet> {
    if cm.total() == 0 {
        return Err(Error::Validation("confusion matrix is empty".into()));
    }
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    Ok(MetricSet {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity,
        specificity,
        precision,
        f1,
        far: specificity.map(|s| 1.0 - s),
    })
}

/// Ground truth for one echo after collapsing the 1/2/3 grading.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTruth {
    pub segments: BTreeMap<u8, SegmentLabel>,
    pub echo: EchoLabel,
}

#[derive(Deserialize)]
struct RawTruth {
    segments: BTreeMap<String, u8>,
    echo: String,
}

/// Grading 1 = normal, 2 = hypokinetic, 3 = akinetic; the last two count
/// as infarcted.
pub fn collapse_grade(code: u8) -> Result<SegmentLabel> {
    match code {
        1 => Ok(SegmentLabel::Normal),
        2 | 3 => Ok(SegmentLabel::Infarcted),
        other => Err(Error::Validation(format!("segment grade {other} not in 1..=3"))),
    }
}

pub fn parse_labels(text: &str) -> Result<BTreeMap<String, EchoTruth>> {
    let raw: BTreeMap<String, RawTruth> =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed labels: {e}")))?;
    let mut out = BTreeMap::new();
    for (id, r) in raw {
        let echo = match r.echo.as_str() {
            "MI" => EchoLabel::Mi,
            "normal" => EchoLabel::Normal,
            other => return Err(Error::Validation(format!("echo {id}: label {other:?} is neither MI nor normal"))),
        };
        let mut segments = BTreeMap::new();
        for (key, code) in r.segments {
            let seg: u8 = key
                .parse()
                .map_err(|_| Error::Validation(format!("echo {id}: segment key {key:?}")))?;
            if !(1..=7).contains(&seg) {
                return Err(Error::Validation(format!("echo {id}: segment {seg} out of range")));
            }
            let label = collapse_grade(code).map_err(|e| Error::Validation(format!("echo {id}: {e}")))?;
            segments.insert(seg, label);
        }
        out.insert(id, EchoTruth { segments, echo });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, EchoTruth>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub counts: ConfusionMatrix,
    pub metrics: MetricSet,
}

impl MetricRow {
    fn from_counts(counts: ConfusionMatrix) -> Result<Self> {
        Ok(MetricRow {
            metrics: compute_metrics(&counts)?,
            counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    /// One row per analyzed segment id.
    pub per_segment: BTreeMap<u8, MetricRow>,
    /// All analyzed segments counted together.
    pub pooled: MetricRow,
    pub per_echo: MetricRow,
}

/// Scores every report against its labels. Echo order does not matter.
pub fn evaluate_batch(reports: &[ReportDocument], labels: &BTreeMap<String, EchoTruth>) -> Result<BatchEvaluation> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports to evaluate".into()));
    }
    let mut seg_counts: BTreeMap<u8, ConfusionMatrix> = ANALYZED_SEGMENTS.iter().map(|&s| (s, Default::default())).collect();
    let mut echo_counts = ConfusionMatrix::default();
    for doc in reports {
        let truth = labels
            .get(&doc.id)
            .ok_or_else(|| Error::Validation(format!("no labels for echo {}", doc.id)))?;
        echo_counts.record(truth.echo == EchoLabel::Mi, doc.echo_label == EchoLabel::Mi);
        for (&seg, counts) in seg_counts.iter_mut() {
            let expected = truth
                .segments
                .get(&seg)
                .ok_or_else(|| Error::Validation(format!("echo {}: no label for segment {seg}", doc.id)))?;
            let predicted = doc
                .segment_label(seg)
                .ok_or_else(|| Error::Validation(format!("echo {}: report lacks segment {seg}", doc.id)))?;
            counts.record(*expected == SegmentLabel::Infarcted, predicted == SegmentLabel::Infarcted);
        }
    }
    let mut pooled = ConfusionMatrix::default();
    for c in seg_counts.values() {
        pooled.merge(c);
    }
    Ok(BatchEvaluation {
        per_segment: seg_counts
            .into_iter()
            .map(|(s, c)| MetricRow::from_counts(c).map(|r| (s, r)))
            .collect::<Result<_>>()?,
        pooled: MetricRow::from_counts(pooled)?,
        per_echo: MetricRow::from_counts(echo_counts)?,
    })
}
