//! Per-frame wall extraction and per-echo diagnosis.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{
    chamber_area, fit_active_polynomials, partition_segments_with, sample_snake_points, ActivePolynomialPair,
    SegmentModel, WallLandmarks, DEFAULT_CAP_FRACTION,
};
use crate::chanvese::{evolve, ChanVeseParams};
use crate::error::{Error, Result, Stage};
use crate::geometry::{centroid, Point};
use crate::imaging::{smooth, EchoSequence, Frame, Landmarks, Pixel};
use crate::levelset::{extract_contour, initialize_levelset, LevelSetField};
use crate::motion::{
    build_displacement_curves, classify_segments, compute_lvef, diagnose, min_pair_interval, Diagnosis,
    DisplacementCurve, LvefGates, Norm, PairInterval, DEFAULT_PAIRING, DEFAULT_SAMPLES, DEFAULT_THRESHOLD,
};
use crate::polyfit::DEFAULT_LAMBDA;
use crate::ridge::{
    advance_anchors, build_roi, detect_ridge_points, fit_guide_lines, fit_ridge_polynomials, paint_wall,
    place_anchor_points, refine_apex, stretch_anchors, RidgePolynomialPair, Side, WallStyle, ANCHOR_COUNT,
    MIN_RIDGE_POINTS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chanvese: ChanVeseParams,
    pub lambda_rp: f64,
    pub lambda_ap: f64,
    pub wall: WallStyle,
    pub delta_frac: f64,
    /// Gaussian pre-smoothing for ridge detection; the snake sees the raw frame.
    pub smoothing_sigma: f64,
    pub apex_radius: u32,
    /// Smoothing applied around the apex seed before refinement.
    pub apex_sigma: f64,
    /// Distance below the ridge apex where the snake's tip is expected:
    /// the cavity ends on the inner face of the apical wall.
    pub apex_inset: f64,
    /// How far outward of the guide lines anchors may move, as a fraction
    /// of half the base width.
    pub anchor_reach: f64,
    /// Extra pixels around the walls kept in the snake's domain.
    pub crop_margin: usize,
    /// Initial contour: the ridge outline shrunk toward its centroid by this factor.
    pub init_scale: f64,
    pub cap_fraction: f64,
    pub n_s: usize,
    pub norm: Norm,
    pub threshold: f64,
    pub gates: LvefGates,
    pub pairing: Vec<(u8, u8)>,
    /// Fraction of frames that must be processed for a diagnosis.
    pub min_processed: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chanvese: ChanVeseParams {
                mu: 0.01 * 255.0 * 255.0,
                dt: 2.0,
                reinit_every: 5,
                narrow_band: 8.0,
                ..ChanVeseParams::default()
            },
            lambda_rp: DEFAULT_LAMBDA,
            lambda_ap: DEFAULT_LAMBDA,
            wall: WallStyle::default(),
            delta_frac: 0.25,
            smoothing_sigma: 1.0,
            apex_radius: 10,
            apex_sigma: 3.0,
            apex_inset: 6.0,
            anchor_reach: 0.5,
            crop_margin: 10,
            init_scale: 0.75,
            cap_fraction: DEFAULT_CAP_FRACTION,
            n_s: DEFAULT_SAMPLES,
            norm: Norm::L2,
            threshold: DEFAULT_THRESHOLD,
            gates: LvefGates::default(),
            pairing: DEFAULT_PAIRING.to_vec(),
            min_processed: 0.8,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.chanvese.validate()?;
        let fail = |msg: String| Err(Error::Validation(msg));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        let g = self.gates;
        if !(0.0 < g.low && g.low < g.high && g.high < 1.0) {
            return fail(format!("LVEF gates must satisfy 0 < low < high < 1, got {} and {}", g.low, g.high));
        }
        if !(self.lambda_rp >= 0.0 && self.lambda_ap >= 0.0) {
            return fail("regularization weights must be non-negative".into());
        }
        if !(self.delta_frac > 0.0 && self.delta_frac < 1.0) {
            return fail(format!("delta_frac must lie in (0, 1), got {}", self.delta_frac));
        }
        if !(self.init_scale > 0.0 && self.init_scale <= 1.0) {
            return fail(format!("init_scale must lie in (0, 1], got {}", self.init_scale));
        }
        if !(self.cap_fraction > 0.0 && self.cap_fraction < 1.0) {
            return fail(format!("cap_fraction must lie in (0, 1), got {}", self.cap_fraction));
        }
        if !(self.apex_sigma >= 0.0 && self.apex_sigma.is_finite()) {
            return fail(format!("apex_sigma must be non-negative, got {}", self.apex_sigma));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return fail(format!("smoothing_sigma must be non-negative, got {}", self.smoothing_sigma));
        }
        if !(self.apex_inset >= 0.0 && self.apex_inset.is_finite()) {
            return fail(format!("apex_inset must be non-negative, got {}", self.apex_inset));
        }
        if !(self.anchor_reach > 0.0) {
            return fail(format!("anchor_reach must be positive, got {}", self.anchor_reach));
        }
        if self.n_s < 2 {
            return fail(format!("n_s must be at least 2, got {}", self.n_s));
        }
        if !(self.min_processed > 0.0 && self.min_processed <= 1.0) {
            return fail(format!("min_processed must lie in (0, 1], got {}", self.min_processed));
        }
        let mut seen = Vec::new();
        for &(l, r) in &self.pairing {
            let valid = |s: u8| matches!(s, 1 | 2 | 3 | 5 | 6 | 7);
            if !valid(l) || !valid(r) || l == r || seen.contains(&l) || seen.contains(&r) {
                return fail(format!("invalid segment pairing {:?}", self.pairing));
            }
            seen.extend([l, r]);
        }
        if seen.len() != 6 {
            return fail(format!("pairing must cover segments 1-3 and 5-7, got {:?}", self.pairing));
        }
        Ok(())
    }
}

/// Milliseconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub ridge: f64,
    pub wall: f64,
    pub snake: f64,
    pub active_polynomials: f64,
    pub segments: f64,
}

impl StageTiming {
    pub fn total(&self) -> f64 {
        self.ridge + self.wall + self.snake + self.active_polynomials + self.segments
    }

    fn add(&mut self, other: &StageTiming) {
        self.ridge += other.ridge;
        self.wall += other.wall;
        self.snake += other.snake;
        self.active_polynomials += other.active_polynomials;
        self.segments += other.segments;
    }

    fn slot(&mut self, stage: Stage) -> &mut f64 {
        match stage {
            Stage::Ridge => &mut self.ridge,
            Stage::Wall => &mut self.wall,
            Stage::Snake => &mut self.snake,
            Stage::ActivePolynomials => &mut self.active_polynomials,
            Stage::Segments => &mut self.segments,
        }
    }
}

/// Everything one frame produces.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub model: SegmentModel,
    pub area: usize,
    /// The input frame with the artificial wall painted in.
    pub wall_frame: Frame,
    pub ridges: RidgePolynomialPair,
    pub aps: ActivePolynomialPair,
    /// Converged zero level set in frame coordinates.
    pub contour: Vec<Point>,
    pub timing: StageTiming,
}

struct Clock {
    index: usize,
    timing: StageTiming,
}

impl Clock {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f();
        *self.timing.slot(stage) += t0.elapsed().as_secs_f64() * 1e3;
        out.map_err(|e| e.at_stage(self.index, stage))
    }
}

/// Where an open contour meets the base row, left end first. The snake
/// runs into the bottom of its crop, so these are the endocardial corners;
/// the ridge base points lie half a wall further out.
fn base_ends(contour: &[Point]) -> Option<(Point, Point)> {
    let (a, b) = (*contour.first()?, *contour.last()?);
    if a.distance(b) < 1e-9 {
        return None;
    }
    Some(if a.x <= b.x { (a, b) } else { (b, a) })
}

/// Closed outline of the ridge walls: left curve from the base up to the
/// apex row, right curve back down, closed across the base.
fn ridge_outline(rps: &RidgePolynomialPair, base_left: f64, base_right: f64) -> Vec<Point> {
    let (top, _) = rps.y_range;
    let n = 64;
    let mut pts: Vec<Point> = (0..=n)
        .map(|i| {
            let y = base_left + (top - base_left) * i as f64 / n as f64;
            Point::new(rps.left.eval(y), y)
        })
        .collect();
    pts.extend((1..=n).map(|i| {
        let y = top + (base_right - top) * i as f64 / n as f64;
        Point::new(rps.right.eval(y), y)
    }));
    pts
}

fn ridge_points(hits: Vec<Option<crate::ridge::RidgeHit>>) -> Vec<Point> {
    hits.into_iter().flatten().filter(|h| h.contrast > 0).map(|h| h.point).collect()
}

/// Apex refinement on a more heavily smoothed window around the seed. The
/// topmost column maximum is biased upward by speckle, so it gets a wider
/// kernel than the ridge search.
fn apex_search(frame: &Frame, seed: Pixel, config: &PipelineConfig) -> Pixel {
    let pad = config.apex_radius as usize + (3.0 * config.apex_sigma).ceil() as usize + 1;
    let x0 = (seed.x as usize).saturating_sub(pad);
    let y0 = (seed.y as usize).saturating_sub(pad);
    let x1 = (seed.x as usize + pad).min(frame.width() - 1);
    let y1 = (seed.y as usize + pad).min(frame.height() - 1);
    let window = smooth(&frame.crop(x0, y0, x1 - x0 + 1, y1 - y0 + 1), config.apex_sigma);
    let local = Pixel::new(seed.x - x0 as u32, seed.y - y0 as u32);
    let p = refine_apex(&window, local, config.apex_radius);
    Pixel::new(p.x + x0 as u32, p.y + y0 as u32)
}

/// Ridge polynomials of one frame and the refined apex.
pub fn extract_ridges(frame: &Frame, landmarks: &Landmarks, config: &PipelineConfig) -> Result<(RidgePolynomialPair, Point)> {
    let start = landmarks.start.to_point();
    let end = landmarks.end.to_point();
    let smoothed = smooth(frame, config.smoothing_sigma);
    let apex = apex_search(frame, landmarks.apex_seed, config);
    let refined = Landmarks {
        apex_seed: apex,
        ..*landmarks
    };
    let lines = fit_guide_lines(&refined)?;
    let anchors = place_anchor_points(&lines, ANCHOR_COUNT);
    let reach = config.anchor_reach * 0.5 * (end.x - start.x);
    let anchors = advance_anchors(&smoothed, &anchors, reach);
    let (ls, rs) = stretch_anchors(&anchors, config.delta_frac, frame.width())?;
    let apex = apex.to_point();
    let mut sides = Vec::with_capacity(2);
    for (stretched, side) in [(&ls, Side::Left), (&rs, Side::Right)] {
        let roi = build_roi(&stretched.inner, &stretched.outer, config.lambda_rp, side)?;
        let mut pts = ridge_points(detect_ridge_points(&smoothed, &roi, anchors.side(side)));
        if pts.len() < MIN_RIDGE_POINTS {
            return Err(Error::InsufficientRidge {
                found: pts.len(),
                required: MIN_RIDGE_POINTS,
            });
        }
        pts.push(apex);
        sides.push(pts);
    }
    let y_range = (apex.y, start.y.max(end.y));
    Ok((fit_ridge_polynomials(&sides[0], &sides[1], config.lambda_rp, y_range)?, apex))
}

/// Converged snake on a crop around the ridge walls, started from the
/// shrunken ridge outline; returned in frame coordinates.
pub fn snake_contour(
    frame: &Frame,
    rps: &RidgePolynomialPair,
    start_y: f64,
    end_y: f64,
    config: &PipelineConfig,
) -> Result<Vec<Point>> {
    let (field, (x0, y0)) = snake_field(frame, rps, start_y, end_y, config)?;
    let contour = extract_contour(&field)?;
    Ok(contour.into_iter().map(|p| p.translate(x0 as f64, y0 as f64)).collect())
}

/// The evolved level set on its crop, with the crop's top-left corner in
/// frame coordinates.
pub fn snake_field(
    frame: &Frame,
    rps: &RidgePolynomialPair,
    start_y: f64,
    end_y: f64,
    config: &PipelineConfig,
) -> Result<(LevelSetField, (usize, usize))> {
    let t = config.wall.thickness as f64 + config.crop_margin as f64;
    let (top, bottom) = rps.y_range;
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let n = 64;
    for k in 0..=n {
        let y = top + (bottom - top) * k as f64 / n as f64;
        x_lo = x_lo.min(rps.left.eval(y));
        x_hi = x_hi.max(rps.right.eval(y));
    }
    let x0 = (x_lo - t).floor().max(0.0) as usize;
    let x1 = ((x_hi + t).ceil() as usize).min(frame.width() - 1);
    let y0 = (top - t).floor().max(0.0) as usize;
    let y1 = (bottom.round() as usize).min(frame.height() - 1);
    if x1 <= x0 + 2 || y1 <= y0 + 2 {
        return Err(Error::Geometry("snake domain is empty".into()));
    }
    let crop = frame.crop(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    let (dx, dy) = (x0 as f64, y0 as f64);
    let outline = ridge_outline(rps, start_y, end_y);
    let c = centroid(&outline);
    let init: Vec<Point> = outline
        .iter()
        .map(|p| {
            let q = c.lerp(*p, config.init_scale);
            Point::new(q.x - dx, q.y - dy)
        })
        .collect();
    let field = initialize_levelset(&init, crop.width(), crop.height())?;
    Ok((evolve(&field, &crop, &config.chanvese)?, (x0, y0)))
}

pub fn process_frame(frame: &Frame, landmarks: &Landmarks, config: &PipelineConfig, index: usize) -> Result<FrameOutput> {
    landmarks.validate(frame.width(), frame.height())?;
    let mut clock = Clock {
        index,
        timing: StageTiming::default(),
    };
    let start = landmarks.start.to_point();
    let end = landmarks.end.to_point();

    let (rps, apex) = clock.run(Stage::Ridge, || extract_ridges(frame, landmarks, config))?;

    let wall_frame = clock.run(Stage::Wall, || Ok(paint_wall(frame, &rps, &config.wall)))?;

    let contour = clock.run(Stage::Snake, || snake_contour(&wall_frame, &rps, start.y, end.y, config))?;

    let aps = clock.run(Stage::ActivePolynomials, || {
        let (base_left, base_right) = base_ends(&contour)
            .unwrap_or((Point::new(rps.left.eval(start.y), start.y), Point::new(rps.right.eval(end.y), end.y)));
        let wl = WallLandmarks {
            start: base_left,
            apex: apex.translate(0.0, config.apex_inset),
            end: base_right,
        };
        let (left, right) = sample_snake_points(&contour, &wl)?;
        let sampled = WallLandmarks {
            start: left[0],
            apex: *left.last().unwrap(),
            end: *right.last().unwrap(),
        };
        fit_active_polynomials(&left, &right, &sampled, config.lambda_ap)
    })?;

    let (model, area) = clock.run(Stage::Segments, || {
        let model = partition_segments_with(&aps, index, config.cap_fraction);
        let area = chamber_area(&aps);
        if area == 0 {
            return Err(Error::Geometry("active polynomials enclose no pixels".into()));
        }
        Ok((model, area))
    })?;

    Ok(FrameOutput {
        model,
        area,
        wall_frame,
        ridges: rps,
        aps,
        contour,
        timing: clock.timing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame: usize,
    pub stage: Option<Stage>,
    pub reason: String,
}

impl FrameFailure {
    fn from_error(frame: usize, err: &Error) -> Self {
        match err {
            Error::Frame { stage, source, .. } => FrameFailure {
                frame,
                stage: Some(*stage),
                reason: source.to_string(),
            },
            other => FrameFailure {
                frame,
                stage: None,
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoReport {
    pub id: String,
    pub frame_count: usize,
    /// Absent when too few frames were processed.
    pub diagnosis: Option<Diagnosis>,
    pub curves: Vec<DisplacementCurve>,
    /// Computed only when the motion analysis ran.
    pub intervals: Vec<PairInterval>,
    /// Processed frames in order; `frame_index` identifies each.
    pub models: Vec<SegmentModel>,
    /// Chamber area per processed frame, aligned with `models`.
    pub areas: Vec<f64>,
    pub timing_ms: StageTiming,
    /// Wall-clock time of every input frame, failed ones included.
    pub frame_ms: Vec<f64>,
    pub failures: Vec<FrameFailure>,
}

impl EchoReport {
    pub fn processed(&self) -> usize {
        self.models.len()
    }

    /// Frame index of each curve's maximum, keyed by segment id.
    pub fn max_frames(&self) -> BTreeMap<u8, usize> {
        self.curves
            .iter()
            .map(|c| (c.segment_id, self.models[c.max_frame].frame_index))
            .collect()
    }

    pub fn require_diagnosis(&self) -> Result<&Diagnosis> {
        self.diagnosis.as_ref().ok_or_else(|| Error::Unprocessable {
            id: self.id.clone(),
            processed: self.processed(),
            total: self.frame_count,
        })
    }
}

/// Runs every frame (in parallel), then the gated motion analysis over the
/// processed frames in index order. The first processed frame serves as
/// end-diastole.
pub fn process_echo(seq: &EchoSequence, config: &PipelineConfig) -> Result<EchoReport> {
    config.validate()?;
    let results: Vec<(Result<FrameOutput>, f64)> = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let t0 = Instant::now();
            let out = process_frame(f, &seq.landmarks, config, i);
            (out, t0.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut timing = StageTiming::default();
    let mut models = Vec::new();
    let mut areas = Vec::new();
    let mut failures = Vec::new();
    let mut frame_ms = Vec::with_capacity(results.len());
    for (i, (r, ms)) in results.into_iter().enumerate() {
        frame_ms.push(ms);
        match r {
            Ok(out) => {
                timing.add(&out.timing);
                models.push(out.model);
                areas.push(out.area as f64);
            }
            Err(e) => failures.push(FrameFailure::from_error(i, &e)),
        }
    }
    let mut report = EchoReport {
        id: seq.id.clone(),
        frame_count: seq.len(),
        diagnosis: None,
        curves: Vec::new(),
        intervals: Vec::new(),
        models,
        areas,
        timing_ms: timing,
        frame_ms,
        failures,
    };
    let enough = report.processed() as f64 >= config.min_processed * seq.len() as f64;
    if !enough || report.processed() < 2 {
        return Ok(report);
    }
    report.curves = build_displacement_curves(&report.models, config.n_s, config.norm)?;
    let lvef = compute_lvef(&report.areas)?;
    let mut intervals = Vec::new();
    let diagnosis = diagnose(lvef, &config.gates, || {
        intervals = min_pair_interval(&report.models, &config.pairing, config.n_s, config.norm)?;
        classify_segments(&report.curves, &intervals, config.threshold)
    })?;
    report.intervals = intervals;
    report.diagnosis = Some(diagnosis);
    Ok(report)
}
