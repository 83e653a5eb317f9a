//! Synthetic apical four-chamber sequences with analytic ground truth.
//!
//! The wall centerlines are `x = x0 ∓ w(y, t)` with the half-width
//! `w = w0(s) (1 - c(t) m(s))`, where `s` runs from 0 at the apex to 1 at
//! the base, `w0(s) = W (1 - (1 - s)^3)` is a cubic arch, `c(t)` is a
//! raised-cosine contraction peaking mid-cycle and `m(s)` is the per-segment
//! motion scale blended smoothly across segment boundaries. The wall is a
//! Gaussian ridge across the centerline; speckle is multiplicative and
//! Rayleigh distributed, drawn from ChaCha8 streams keyed by frame index.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{segment_cuts, SegmentModel, DEFAULT_CAP_FRACTION};
use crate::error::{Error, Result};
use crate::geometry::{cumulative_arc_length, Point};
use crate::imaging::{write_sequence_files, EchoSequence, Frame, Landmarks, Pixel};
use crate::motion::{
    build_displacement_curves, classify_segments, compute_lvef, diagnose, min_pair_interval, EchoLabel, Gate,
    LvefGates, Norm, SegmentLabel, DEFAULT_PAIRING, DEFAULT_SAMPLES, DEFAULT_THRESHOLD,
};

pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub wall_brightness: u8,
    pub cavity_brightness: u8,
    /// Myocardium and surrounding tissue outside the cavity.
    pub tissue_brightness: u8,
    /// Overrides the right wall's peak brightness.
    pub right_wall_brightness: Option<u8>,
    /// Overrides the tissue brightness right of the apex, so a faint
    /// right wall can look like a dropout into blood pool.
    pub right_tissue_brightness: Option<u8>,
    /// Standard deviation of the wall's Gaussian cross-section, pixels.
    pub wall_sigma: f64,
    /// Speckle strength: the multiplicative noise has a standard deviation
    /// of `noise_sigma / 100`.
    pub noise_sigma: f64,
    /// Peak fractional inward motion of a fully moving wall.
    pub contraction_amplitude: f64,
    /// Motion scale of segments 1, 2, 3, 5, 6, 7.
    pub per_segment_motion_scale: [f64; 6],
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            id: "phantom".into(),
            width: 636,
            height: 422,
            frames: 23,
            fps: 25.0,
            wall_brightness: 220,
            cavity_brightness: 30,
            tissue_brightness: 90,
            right_wall_brightness: None,
            right_tissue_brightness: None,
            wall_sigma: 1.8,
            noise_sigma: 0.0,
            contraction_amplitude: 0.3,
            per_segment_motion_scale: [1.0; 6],
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.width < 64 || self.height < 64 {
            return fail(format!("phantom frame {}x{} is too small", self.width, self.height));
        }
        if self.frames < 2 {
            return fail(format!("phantom needs at least 2 frames, got {}", self.frames));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if self.wall_brightness <= self.cavity_brightness {
            return fail(format!(
                "wall brightness {} must exceed cavity brightness {}",
                self.wall_brightness, self.cavity_brightness
            ));
        }
        if !(self.wall_sigma.is_finite() && self.wall_sigma > 0.0) {
            return fail(format!("wall_sigma must be positive, got {}", self.wall_sigma));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.contraction_amplitude) {
            return fail(format!(
                "contraction_amplitude must lie in [0, 1), got {}",
                self.contraction_amplitude
            ));
        }
        if let Some(m) = self.per_segment_motion_scale.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return fail(format!("motion scales must lie in [0, 1], got {m}"));
        }
        Ok(())
    }

    /// Same phantom with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PhantomConfig {
        PhantomConfig {
            width: (self.width as f64 * factor).round() as usize,
            height: (self.height as f64 * factor).round() as usize,
            wall_sigma: self.wall_sigma * factor,
            ..self.clone()
        }
    }
}

/// Analytic wall geometry of a phantom.
#[derive(Debug, Clone)]
pub struct PhantomGeometry {
    pub x0: f64,
    pub apex_y: f64,
    pub base_y: f64,
    pub half_width: f64,
    amplitude: f64,
    frames: usize,
    /// Motion scale per segment 1..=7 (cap included).
    scales: [f64; 7],
    /// Arc length of one ED centerline side, apex to base.
    side_arc: f64,
    /// `(y, arc from apex)` table along the ED centerline.
    arc_table: Vec<(f64, f64)>,
    /// Half-thickness at which the wall profile falls to half its peak.
    half_max: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl PhantomGeometry {
    pub fn new(config: &PhantomConfig) -> Self {
        let (w, h) = (config.width as f64, config.height as f64);
        let m = config.per_segment_motion_scale;
        let mut geo = PhantomGeometry {
            x0: (w / 2.0).floor(),
            apex_y: (0.1 * h).round(),
            base_y: (0.88 * h).round(),
            half_width: (0.15 * w).round(),
            amplitude: config.contraction_amplitude,
            frames: config.frames,
            scales: [m[0], m[1], m[2], 0.5 * (m[2] + m[3]), m[3], m[4], m[5]],
            side_arc: 0.0,
            arc_table: Vec::new(),
            half_max: config.wall_sigma * (2.0 * std::f64::consts::LN_2).sqrt(),
        };
        let n = 4096;
        let pts: Vec<Point> = (0..=n)
            .map(|i| {
                let y = geo.apex_y + (geo.base_y - geo.apex_y) * i as f64 / n as f64;
                Point::new(geo.w0(y), y)
            })
            .collect();
        let cum = cumulative_arc_length(&pts);
        geo.side_arc = *cum.last().unwrap();
        geo.arc_table = pts.iter().zip(cum).map(|(p, s)| (p.y, s)).collect();
        geo
    }

    fn span(&self) -> f64 {
        self.base_y - self.apex_y
    }

    fn s_of(&self, y: f64) -> f64 {
        ((y - self.apex_y) / self.span()).clamp(0.0, 1.0)
    }

    /// End-diastolic half-width.
    pub fn w0(&self, y: f64) -> f64 {
        let u = 1.0 - self.s_of(y);
        self.half_width * (1.0 - u * u * u)
    }

    /// Contraction level of frame `t`, zero at both ends of the cycle.
    pub fn contraction(&self, t: usize) -> f64 {
        if self.frames < 2 {
            return 0.0;
        }
        let phase = 2.0 * std::f64::consts::PI * t as f64 / (self.frames - 1) as f64;
        0.5 * self.amplitude * (1.0 - phase.cos())
    }

    fn arc_from_apex(&self, y: f64) -> f64 {
        let t = &self.arc_table;
        let i = t.partition_point(|(yy, _)| *yy < y).clamp(1, t.len() - 1);
        let (y0, s0) = t[i - 1];
        let (y1, s1) = t[i];
        if y1 == y0 {
            return s0;
        }
        s0 + (s1 - s0) * ((y - y0) / (y1 - y0)).clamp(0.0, 1.0)
    }

    /// Motion scale at arc position `g` along the ED start-apex-end centerline.
    fn motion_at_arc(&self, g: f64) -> f64 {
        let total = 2.0 * self.side_arc;
        let cuts = segment_cuts(total, self.side_arc, DEFAULT_CAP_FRACTION);
        let mut bounds = vec![0.0];
        bounds.extend_from_slice(&cuts);
        bounds.push(total);
        let mut m = self.scales[0];
        for k in 0..6 {
            let len = (bounds[k + 1] - bounds[k]).min(bounds[k + 2] - bounds[k + 1]);
            let half = 0.1 * len;
            let t = (g - cuts[k] + half) / (2.0 * half);
            m += (self.scales[k + 1] - self.scales[k]) * smoothstep(t);
        }
        m
    }

    fn motion(&self, y: f64, left: bool) -> f64 {
        let u = self.arc_from_apex(y);
        let g = if left { self.side_arc - u } else { self.side_arc + u };
        self.motion_at_arc(g)
    }

    fn half_widths(&self, y: f64, t: usize) -> (f64, f64) {
        let c = self.contraction(t);
        let w0 = self.w0(y);
        (w0 * (1.0 - c * self.motion(y, true)), w0 * (1.0 - c * self.motion(y, false)))
    }

    pub fn left_x(&self, y: f64, t: usize) -> f64 {
        self.x0 - self.half_widths(y, t).0
    }

    pub fn right_x(&self, y: f64, t: usize) -> f64 {
        self.x0 + self.half_widths(y, t).1
    }

    fn slopes(&self, y: f64, t: usize) -> (f64, f64) {
        let d = 1e-3;
        let (y0, y1) = ((y - d).max(self.apex_y), (y + d).min(self.base_y));
        let dl = (self.left_x(y1, t) - self.left_x(y0, t)) / (y1 - y0);
        let dr = (self.right_x(y1, t) - self.right_x(y0, t)) / (y1 - y0);
        (dl, dr)
    }

    /// Endocardial x positions at row `y`: each centerline moved inward by
    /// the wall's half-maximum half-thickness, measured along its normal.
    pub fn endocardium(&self, y: f64, t: usize) -> (f64, f64) {
        let (dl, dr) = self.slopes(y, t);
        let xl = self.left_x(y, t) + self.half_max * (1.0 + dl * dl).sqrt();
        let xr = self.right_x(y, t) - self.half_max * (1.0 + dr * dr).sqrt();
        (xl, xr)
    }

    pub fn cavity_width(&self, y: f64, t: usize) -> f64 {
        let (xl, xr) = self.endocardium(y, t);
        (xr - xl).max(0.0)
    }

    pub fn cavity_area(&self, t: usize) -> f64 {
        let n = (4.0 * self.span()).ceil() as usize;
        let hstep = self.span() / n as f64;
        // Simpson's rule
        (0..=n)
            .map(|i| {
                let y = self.apex_y + hstep * i as f64;
                let wgt = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                wgt * self.cavity_width(y, t)
            })
            .sum::<f64>()
            * hstep
            / 3.0
    }

    /// Highest row where the endocardial borders are still apart.
    fn endocardial_top(&self, t: usize) -> Option<f64> {
        let (mut lo, mut hi) = (self.apex_y, self.base_y);
        if self.cavity_width(hi, t) <= 0.0 {
            return None;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cavity_width(mid, t) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    /// Start-apex-end endocardial polyline of frame `t` and the arc
    /// position of its apex.
    pub fn endocardial_boundary(&self, t: usize) -> Result<(Vec<Point>, f64)> {
        let top = self
            .endocardial_top(t)
            .ok_or_else(|| Error::Geometry(format!("phantom cavity vanishes at frame {t}")))?;
        let n = ((self.base_y - top) / 0.5).ceil().max(2.0) as usize;
        let ys: Vec<f64> = (0..=n).map(|i| self.base_y - (self.base_y - top) * i as f64 / n as f64).collect();
        let mut pts: Vec<Point> = ys.iter().map(|&y| Point::new(self.endocardium(y, t).0, y)).collect();
        let join = pts.len() - 1;
        pts.extend(ys.iter().rev().skip(1).map(|&y| Point::new(self.endocardium(y, t).1, y)));
        let cum = cumulative_arc_length(&pts);
        let apex_arc = 0.5 * (cum[join] + cum[join + 1]);
        Ok((pts, apex_arc))
    }

    pub fn centerline(&self, t: usize, step: f64) -> (Vec<Point>, Vec<Point>) {
        let n = (self.span() / step).ceil() as usize;
        let ys = (0..=n).map(|i| self.apex_y + self.span() * i as f64 / n as f64);
        ys.map(|y| (Point::new(self.left_x(y, t), y), Point::new(self.right_x(y, t), y)))
            .unzip()
    }

    pub fn landmarks(&self) -> Landmarks {
        let px = |x: f64, y: f64| Pixel::new(x.round() as u32, y.round() as u32);
        Landmarks {
            start: px(self.x0 - self.half_width, self.base_y),
            end: px(self.x0 + self.half_width, self.base_y),
            apex_seed: px(self.x0, self.apex_y),
        }
    }

    pub fn segment_model(&self, t: usize) -> Result<SegmentModel> {
        let (pts, apex_arc) = self.endocardial_boundary(t)?;
        Ok(SegmentModel {
            frame_index: t,
            segments: crate::active::partition_boundary(&pts, apex_arc, DEFAULT_CAP_FRACTION),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centerlines {
    /// Per frame, apex to base.
    pub left: Vec<Vec<Point>>,
    pub right: Vec<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub true_lvef: f64,
    pub segment_labels: BTreeMap<u8, SegmentLabel>,
    /// Analytic displacement ratios of the endocardial segments.
    pub ratios: BTreeMap<u8, f64>,
    pub echo_label: EchoLabel,
    pub gate: Gate,
    /// Analytic endocardial cavity area per frame, pixels.
    pub areas: Vec<f64>,
    pub centerlines: Centerlines,
    pub landmarks: Landmarks,
    pub config: PhantomConfig,
}

impl PhantomTruth {
    pub fn infarcted_segments(&self) -> Vec<u8> {
        self.segment_labels
            .iter()
            .filter(|(_, l)| **l == SegmentLabel::Infarcted)
            .map(|(id, _)| *id)
            .collect()
    }
}

fn rayleigh_standard(rng: &mut ChaCha8Rng) -> f64 {
    let mean = (std::f64::consts::PI / 2.0).sqrt();
    let sd = ((4.0 - std::f64::consts::PI) / 2.0).sqrt();
    let u: f64 = 1.0 - rng.gen::<f64>();
    ((-2.0 * u.ln()).sqrt() - mean) / sd
}

fn render_frame(geo: &PhantomGeometry, config: &PhantomConfig, t: usize) -> Frame {
    let (w, h) = (config.width, config.height);
    let sigma = config.wall_sigma;
    let reach = (4.0 * sigma).ceil() as isize;
    // nearest distance to each centerline, within the splat reach
    let mut dist = [vec![f64::INFINITY; w * h], vec![f64::INFINITY; w * h]];
    let (left, right) = geo.centerline(t, 0.25);
    for (side, line) in [left, right].iter().enumerate() {
        for pair in line.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let n = (a.distance(b) / 0.25).ceil().max(1.0) as usize;
            for k in 0..n {
                let p = a.lerp(b, k as f64 / n as f64);
                let (cx, cy) = (p.x.round() as isize, p.y.round() as isize);
                for y in (cy - reach).max(0)..=(cy + reach).min(h as isize - 1) {
                    for x in (cx - reach).max(0)..=(cx + reach).min(w as isize - 1) {
                        let d = ((x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2)).sqrt();
                        let slot = &mut dist[side][y as usize * w + x as usize];
                        if d < *slot {
                            *slot = d;
                        }
                    }
                }
            }
        }
    }
    let peaks = [
        config.wall_brightness as f64,
        config.right_wall_brightness.unwrap_or(config.wall_brightness) as f64,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(t as u64);
    let gain = config.noise_sigma / 100.0;
    let mut pixels = vec![0u8; w * h];
    for y in 0..h {
        let yf = y as f64;
        let inside_rows = yf > geo.apex_y && yf <= geo.base_y;
        let (xl, xr) = if inside_rows {
            (geo.left_x(yf, t), geo.right_x(yf, t))
        } else {
            (0.0, -1.0)
        };
        for x in 0..w {
            let i = y * w + x;
            let xf = x as f64;
            let side = if dist[0][i] <= dist[1][i] { 0 } else { 1 };
            let base = if xf > xl && xf < xr {
                config.cavity_brightness as f64
            } else if xf > geo.x0 {
                config.right_tissue_brightness.unwrap_or(config.tissue_brightness) as f64
            } else {
                config.tissue_brightness as f64
            };
            let d = dist[side][i];
            let clean = if d.is_finite() {
                base + (peaks[side] - base) * (-d * d / (2.0 * sigma * sigma)).exp()
            } else {
                base
            };
            let v = if gain > 0.0 {
                clean * (1.0 + gain * rayleigh_standard(&mut rng))
            } else {
                clean
            };
            pixels[i] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Frame::new(w, h, pixels).expect("dimensions match")
}

/// Truth labels of the analytic endocardium run through the same motion
/// analysis as the pipeline.
fn analytic_diagnosis(
    geo: &PhantomGeometry,
    frames: usize,
    areas: &[f64],
) -> Result<(f64, BTreeMap<u8, SegmentLabel>, BTreeMap<u8, f64>, EchoLabel, Gate)> {
    let models = (0..frames).map(|t| geo.segment_model(t)).collect::<Result<Vec<_>>>()?;
    let curves = build_displacement_curves(&models, DEFAULT_SAMPLES, Norm::L2)?;
    let intervals = min_pair_interval(&models, &DEFAULT_PAIRING, DEFAULT_SAMPLES, Norm::L2)?;
    let verdicts = classify_segments(&curves, &intervals, DEFAULT_THRESHOLD)?;
    let lvef = compute_lvef(areas)?;
    let labels = verdicts.iter().map(|v| (v.segment_id, v.label)).collect();
    let ratios = verdicts.iter().map(|v| (v.segment_id, v.ratio.unwrap_or(0.0))).collect();
    let diagnosis = diagnose(lvef, &LvefGates::default(), || Ok(verdicts.clone()))?;
    Ok((lvef, labels, ratios, diagnosis.echo_label, diagnosis.gate))
}

pub fn generate_phantom(config: &PhantomConfig) -> Result<(EchoSequence, PhantomTruth)> {
    config.validate()?;
    let geo = PhantomGeometry::new(config);
    let peak = (0..config.frames)
        .max_by(|a, b| geo.contraction(*a).total_cmp(&geo.contraction(*b)))
        .unwrap_or(0);
    if geo.endocardial_top(peak).is_none() || geo.cavity_width(0.5 * (geo.apex_y + geo.base_y), peak) <= 0.0 {
        return Err(Error::Validation(format!(
            "phantom walls collide at peak contraction (frame {peak})"
        )));
    }
    let frames: Vec<Frame> = (0..config.frames)
        .into_par_iter()
        .map(|t| render_frame(&geo, config, t))
        .collect();
    let areas: Vec<f64> = (0..config.frames).map(|t| geo.cavity_area(t)).collect();
    let (true_lvef, segment_labels, ratios, echo_label, gate) = analytic_diagnosis(&geo, config.frames, &areas)?;
    let step = 2.0;
    let (left, right) = (0..config.frames).map(|t| geo.centerline(t, step)).unzip();
    let landmarks = geo.landmarks();
    let seq = EchoSequence::new(config.id.clone(), config.fps, landmarks, frames)?;
    let truth = PhantomTruth {
        true_lvef,
        segment_labels,
        ratios,
        echo_label,
        gate,
        areas,
        centerlines: Centerlines { left, right },
        landmarks,
        config: config.clone(),
    };
    Ok((seq, truth))
}

/// Frames, landmarks and `truth.json` into `dir`.
pub fn write_sequence(seq: &EchoSequence, truth: &PhantomTruth, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = write_sequence_files(seq, dir)?;
    let path = dir.join(TRUTH_FILE);
    let json = serde_json::to_string(truth).expect("truth serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    paths.push(path);
    Ok(paths)
}

pub fn read_truth(path: &Path) -> Result<PhantomTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
