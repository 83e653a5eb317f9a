//! Ejection fraction, segment displacement curves and the MI decision flow.

use serde::{Deserialize, Serialize};

use crate::active::SegmentModel;
use crate::error::{Error, Result};
use crate::geometry::{resample_equal_arc, Point};

/// Segments that take part in motion analysis; 4 (apical cap) does not.
pub const ANALYZED_SEGMENTS: [u8; 6] = [1, 2, 3, 5, 6, 7];
/// Basal, mid and apical segments paired across the chamber.
pub const DEFAULT_PAIRING: [(u8, u8); 3] = [(1, 7), (2, 6), (3, 5)];
pub const DEFAULT_THRESHOLD: f64 = 0.19;
pub const DEFAULT_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

pub fn point_distance(p1: Point, p2: Point, norm: Norm) -> f64 {
    let (dx, dy) = ((p1.x - p2.x).abs(), (p1.y - p2.y).abs());
    match norm {
        Norm::L1 => dx + dy,
        Norm::L2 => dx.hypot(dy),
        Norm::Linf => dx.max(dy),
    }
}

/// Mean distance between `n_s` equal-arc samples of the two polylines,
/// matched by index.
pub fn segment_displacement(seg_t0: &[Point], seg_t: &[Point], n_s: usize, norm: Norm) -> f64 {
    let a = resample_equal_arc(seg_t0, n_s);
    let b = resample_equal_arc(seg_t, n_s);
    a.iter().zip(&b).map(|(p, q)| point_distance(*p, *q, norm)).sum::<f64>() / n_s as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCurve {
    pub segment_id: u8,
    /// Displacement from frame 0, per frame.
    pub values: Vec<f64>,
    pub max_value: f64,
    pub max_frame: usize,
}

impl DisplacementCurve {
    pub fn from_values(segment_id: u8, values: Vec<f64>) -> Self {
        let (max_frame, max_value) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
        DisplacementCurve {
            segment_id,
            values,
            max_value,
            max_frame,
        }
    }
}

fn check_models(models: &[SegmentModel], min: usize) -> Result<()> {
    if models.len() < min {
        return Err(Error::Validation(format!(
            "motion analysis needs at least {min} frames, got {}",
            models.len()
        )));
    }
    if let Some(m) = models.iter().find(|m| m.segments.len() != 7) {
        return Err(Error::Validation(format!(
            "frame {} has {} segments, expected 7",
            m.frame_index,
            m.segments.len()
        )));
    }
    Ok(())
}

/// One curve per analyzed segment, in the order of [`ANALYZED_SEGMENTS`].
pub fn build_displacement_curves(models: &[SegmentModel], n_s: usize, norm: Norm) -> Result<Vec<DisplacementCurve>> {
    check_models(models, 2)?;
    let base = &models[0];
    Ok(ANALYZED_SEGMENTS
        .iter()
        .map(|&id| {
            let values = models
                .iter()
                .map(|m| segment_displacement(base.segment(id), m.segment(id), n_s, norm))
                .collect();
            DisplacementCurve::from_values(id, values)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub left: u8,
    pub right: u8,
    /// Smallest mean distance between the paired segments over the cycle.
    pub interval: f64,
    pub frame: usize,
}

/// Mean distance across the chamber between two paired segments of one
/// frame. The left segment runs toward the apex and the right one away from
/// it, so sample `i` on the left faces sample `n_s - 1 - i` on the right.
pub fn pair_distance(model: &SegmentModel, pair: (u8, u8), n_s: usize, norm: Norm) -> f64 {
    let a = resample_equal_arc(model.segment(pair.0), n_s);
    let b = resample_equal_arc(model.segment(pair.1), n_s);
    a.iter()
        .zip(b.iter().rev())
        .map(|(p, q)| point_distance(*p, *q, norm))
        .sum::<f64>()
        / n_s as f64
}

pub fn min_pair_interval(
    models: &[SegmentModel],
    pairing: &[(u8, u8)],
    n_s: usize,
    norm: Norm,
) -> Result<Vec<PairInterval>> {
    check_models(models, 1)?;
    pairing
        .iter()
        .map(|&pair| {
            let (frame, interval) = models
                .iter()
                .enumerate()
                .map(|(i, m)| (i, pair_distance(m, pair, n_s, norm)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            if !(interval > 1e-9) {
                return Err(Error::Geometry(format!(
                    "segments {} and {} touch (interval {interval:.3e})",
                    pair.0, pair.1
                )));
            }
            Ok(PairInterval {
                left: pair.0,
                right: pair.1,
                interval,
                frame,
            })
        })
        .collect()
}

/// `1 - min(area) / max(area)`.
pub fn compute_lvef(areas: &[f64]) -> Result<f64> {
    if areas.is_empty() {
        return Err(Error::Validation("no areas to compute LVEF from".into()));
    }
    if let Some((i, a)) = areas.iter().enumerate().find(|(_, a)| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Validation(format!("area of frame {i} is {a}, must be positive")));
    }
    let min = areas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = areas.iter().copied().fold(0.0, f64::max);
    Ok(1.0 - min / max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentLabel {
    Normal,
    Infarcted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub segment_id: u8,
    /// Maximum displacement over the paired minimum interval; absent when
    /// the echo was decided by the LVEF gates alone.
    pub ratio: Option<f64>,
    pub label: SegmentLabel,
}

pub fn classify_segments(
    curves: &[DisplacementCurve],
    intervals: &[PairInterval],
    threshold: f64,
) -> Result<Vec<SegmentVerdict>> {
    curves
        .iter()
        .map(|c| {
            let pair = intervals
                .iter()
                .find(|p| p.left == c.segment_id || p.right == c.segment_id)
                .ok_or_else(|| Error::Validation(format!("segment {} has no pair", c.segment_id)))?;
            let ratio = c.max_value / pair.interval;
            Ok(SegmentVerdict {
                segment_id: c.segment_id,
                ratio: Some(ratio),
                label: if ratio < threshold {
                    SegmentLabel::Infarcted
                } else {
                    SegmentLabel::Normal
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EchoLabel {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "MI")]
    Mi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    LvefHigh,
    LvefLow,
    MotionAnalysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvefGates {
    /// At or above: normal without motion analysis.
    pub high: f64,
    /// At or below: MI without motion analysis.
    pub low: f64,
}

impl Default for LvefGates {
    fn default() -> Self {
        LvefGates { high: 0.55, low: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub lvef: f64,
    pub verdicts: Vec<SegmentVerdict>,
    pub echo_label: EchoLabel,
    pub gate: Gate,
}

impl Diagnosis {
    pub fn check_invariants(&self, gates: &LvefGates) -> std::result::Result<(), String> {
        let all = |label| self.verdicts.iter().all(|v| v.label == label);
        match self.gate {
            Gate::LvefHigh => {
                if !(self.lvef >= gates.high && self.echo_label == EchoLabel::Normal && all(SegmentLabel::Normal)) {
                    return Err(format!("bad high-gate diagnosis {self:?}"));
                }
            }
            Gate::LvefLow => {
                if !(self.lvef <= gates.low && self.echo_label == EchoLabel::Mi && all(SegmentLabel::Infarcted)) {
                    return Err(format!("bad low-gate diagnosis {self:?}"));
                }
            }
            Gate::MotionAnalysis => {
                let any_mi = self.verdicts.iter().any(|v| v.label == SegmentLabel::Infarcted);
                let label_ok = (self.echo_label == EchoLabel::Mi) == any_mi;
                if !(self.lvef > gates.low && self.lvef < gates.high && label_ok) {
                    return Err(format!("bad motion-analysis diagnosis {self:?}"));
                }
            }
        }
        Ok(())
    }
}

fn gated(label: SegmentLabel) -> Vec<SegmentVerdict> {
    ANALYZED_SEGMENTS
        .iter()
        .map(|&segment_id| SegmentVerdict {
            segment_id,
            ratio: None,
            label,
        })
        .collect()
}

/// Applies the LVEF gates; `verdicts` runs only when LVEF falls strictly
/// between them.
pub fn diagnose<F>(lvef: f64, gates: &LvefGates, verdicts: F) -> Result<Diagnosis>
where
    F: FnOnce() -> Result<Vec<SegmentVerdict>>,
{
    if !(0.0..=1.0).contains(&lvef) {
        return Err(Error::Validation(format!("LVEF {lvef} outside [0, 1]")));
    }
    if lvef >= gates.high {
        return Ok(Diagnosis {
            lvef,
            verdicts: gated(SegmentLabel::Normal),
            echo_label: EchoLabel::Normal,
            gate: Gate::LvefHigh,
        });
    }
    if lvef <= gates.low {
        return Ok(Diagnosis {
            lvef,
            verdicts: gated(SegmentLabel::Infarcted),
            echo_label: EchoLabel::Mi,
            gate: Gate::LvefLow,
        });
    }
    let verdicts = verdicts()?;
    let echo_label = if verdicts.iter().any(|v| v.label == SegmentLabel::Infarcted) {
        EchoLabel::Mi
    } else {
        EchoLabel::Normal
    };
    Ok(Diagnosis {
        lvef,
        verdicts,
        echo_label,
        gate: Gate::MotionAnalysis,
    })
}

/// Frame with the largest summed displacement over the analyzed segments.
pub fn peak_motion_frame(curves: &[DisplacementCurve]) -> usize {
    let frames = curves.first().map(|c| c.values.len()).unwrap_or(0);
    (0..frames)
        .map(|t| (t, curves.iter().map(|c| c.values[t]).sum::<f64>()))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}
