//! Active polynomials: quartic wall models fitted to the converged contour,
//! their seven-segment partition and the enclosed chamber area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::polyfit::{fit_wall_curve, Polynomial};

pub const SNAKE_SAMPLES: usize = 9;
/// How close, in pixels, the contour must pass to each landmark.
pub const ALIGNMENT_TOLERANCE: f64 = 5.0;
/// Allowed mismatch, in pixels, between the fitted walls and the landmarks.
pub const AP_TOLERANCE: f64 = 3.0;
pub const DEFAULT_CAP_FRACTION: f64 = 1.0 / 7.0;

/// Per-frame wall landmarks in continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallLandmarks {
    pub start: Point,
    pub apex: Point,
    pub end: Point,
}

/// Walks along `contour` from arc position `from` to `to`, where the
/// contour is treated as a loop of length `total` when `closed`.
fn arc_path(contour: &[Point], cum: &[f64], from: f64, to: f64, forward: bool, closed: bool) -> Vec<Point> {
    let total = *cum.last().unwrap();
    if !closed {
        let (a, b) = if from <= to { (from, to) } else { (to, from) };
        let mut path = geometry::slice_arc(contour, cum, a, b);
        if from > to {
            path.reverse();
        }
        return path;
    }
    // unroll the loop twice so any forward walk is a plain slice
    let mut unrolled: Vec<Point> = contour.to_vec();
    unrolled.extend_from_slice(&contour[1..]);
    let mut ucum = cum.to_vec();
    ucum.extend(cum[1..].iter().map(|s| s + total));
    if forward {
        let end = if to >= from { to } else { to + total };
        geometry::slice_arc(&unrolled, &ucum, from, end)
    } else {
        let start = if from >= to { from } else { from + total };
        let mut path = geometry::slice_arc(&unrolled, &ucum, to, start);
        path.reverse();
        path
    }
}

/// Nine points per side at equal arc-length spacing along the contour:
/// start to apex on the left, apex to end on the right, endpoints included.
pub fn sample_snake_points(contour: &[Point], landmarks: &WallLandmarks) -> Result<(Vec<Point>, Vec<Point>)> {
    sample_snake_points_n(contour, landmarks, SNAKE_SAMPLES)
}

pub fn sample_snake_points_n(
    contour: &[Point],
    landmarks: &WallLandmarks,
    count: usize,
) -> Result<(Vec<Point>, Vec<Point>)> {
    if contour.len() < 2 || count < 2 {
        return Err(Error::Geometry("contour too short to sample".into()));
    }
    let cum = geometry::cumulative_arc_length(contour);
    let total = *cum.last().unwrap();
    let mut pos = [0.0; 3];
    for (k, (name, p)) in [
        ("start", landmarks.start),
        ("apex", landmarks.apex),
        ("end", landmarks.end),
    ]
    .into_iter()
    .enumerate()
    {
        let (d, s) = geometry::project_onto_polyline(contour, &cum, p);
        if d > ALIGNMENT_TOLERANCE {
            return Err(Error::Alignment {
                landmark: name,
                distance: d,
                tolerance: ALIGNMENT_TOLERANCE,
            });
        }
        pos[k] = s;
    }
    let [s_start, s_apex, s_end] = pos;
    let closed = contour.len() > 3 && contour[0].distance(contour[contour.len() - 1]) < 1e-9;
    let (left, right) = if closed {
        let ahead = |a: f64, b: f64| (b - a).rem_euclid(total);
        // go the way that meets the apex before the end
        let forward = ahead(s_start, s_apex) < ahead(s_start, s_end);
        (
            arc_path(contour, &cum, s_start, s_apex, forward, true),
            arc_path(contour, &cum, s_apex, s_end, forward, true),
        )
    } else {
        let ordered = (s_start <= s_apex && s_apex <= s_end) || (s_start >= s_apex && s_apex >= s_end);
        if !ordered {
            return Err(Error::Geometry("apex does not lie between start and end along the contour".into()));
        }
        (
            arc_path(contour, &cum, s_start, s_apex, true, false),
            arc_path(contour, &cum, s_apex, s_end, true, false),
        )
    };
    Ok((
        geometry::resample_equal_arc(&left, count),
        geometry::resample_equal_arc(&right, count),
    ))
}

/// Left and right wall models `x = P(y)` with the landmarks they were
/// fitted against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePolynomialPair {
    pub left: Polynomial,
    pub right: Polynomial,
    pub apex: Point,
    pub start: Point,
    pub end: Point,
}

impl ActivePolynomialPair {
    pub fn validate(&self) -> Result<()> {
        let gap = (self.left.eval(self.apex.y) - self.right.eval(self.apex.y)).abs();
        if gap > AP_TOLERANCE {
            return Err(Error::Geometry(format!(
                "active polynomials are {gap:.2} px apart at the apex"
            )));
        }
        let ds = (self.left.eval(self.start.y) - self.start.x).abs();
        let de = (self.right.eval(self.end.y) - self.end.x).abs();
        if ds > AP_TOLERANCE || de > AP_TOLERANCE {
            return Err(Error::Geometry(format!(
                "active polynomials miss the base points by {ds:.2} and {de:.2} px"
            )));
        }
        let (top, bottom) = (self.apex.y, self.start.y.max(self.end.y));
        for k in 0..=64 {
            let y = top + (bottom - top) * k as f64 / 64.0;
            if self.left.eval(y) - self.right.eval(y) > AP_TOLERANCE {
                return Err(Error::Geometry(format!("active polynomials cross at y = {y:.1}")));
            }
        }
        Ok(())
    }

    /// Dense wall polyline: left curve from start up to the apex row, then
    /// right curve down to end. Also returns the arc position of the apex
    /// (the middle of the join between the two curves).
    pub fn boundary(&self) -> (Vec<Point>, f64) {
        let step = 0.5;
        let side = |poly: &Polynomial, from: f64, to: f64| -> Vec<Point> {
            let n = ((to - from).abs() / step).ceil().max(1.0) as usize;
            (0..=n)
                .map(|i| {
                    let y = from + (to - from) * i as f64 / n as f64;
                    Point::new(poly.eval(y), y)
                })
                .collect()
        };
        let mut pts = side(&self.left, self.start.y, self.apex.y);
        let join_from = pts.len() - 1;
        let right = side(&self.right, self.apex.y, self.end.y);
        if right[0].distance(pts[join_from]) < 1e-12 {
            pts.extend_from_slice(&right[1..]);
        } else {
            pts.extend_from_slice(&right);
        }
        let cum = geometry::cumulative_arc_length(&pts);
        let apex_arc = 0.5 * (cum[join_from] + cum[(join_from + 1).min(pts.len() - 1)]);
        (pts, apex_arc)
    }
}

pub fn fit_active_polynomials(
    left: &[Point],
    right: &[Point],
    landmarks: &WallLandmarks,
    lambda: f64,
) -> Result<ActivePolynomialPair> {
    let aps = ActivePolynomialPair {
        left: fit_wall_curve(left, 4, lambda)?,
        right: fit_wall_curve(right, 4, lambda)?,
        apex: landmarks.apex,
        start: landmarks.start,
        end: landmarks.end,
    };
    aps.validate()?;
    Ok(aps)
}

/// Seven wall segments of one frame, numbered 1..=7 from the start point
/// over the apex to the end point; 4 is the apical cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentModel {
    pub frame_index: usize,
    pub segments: Vec<Vec<Point>>,
}

impl SegmentModel {
    /// Polyline of segment `id` (1-based).
    pub fn segment(&self, id: u8) -> &[Point] {
        &self.segments[id as usize - 1]
    }

    pub fn scaled(&self, factor: f64) -> SegmentModel {
        SegmentModel {
            frame_index: self.frame_index,
            segments: self
                .segments
                .iter()
                .map(|s| s.iter().map(|p| Point::new(p.x * factor, p.y * factor)).collect())
                .collect(),
        }
    }
}

/// Arc positions of the six cut points of a boundary of length `total` with
/// the cap centered at `apex_arc`.
pub fn segment_cuts(total: f64, apex_arc: f64, cap_fraction: f64) -> [f64; 6] {
    let half_cap = 0.5 * cap_fraction * total;
    let cap_lo = (apex_arc - half_cap).clamp(0.0, total);
    let cap_hi = (apex_arc + half_cap).clamp(cap_lo, total);
    let right = total - cap_hi;
    [
        cap_lo / 3.0,
        2.0 * cap_lo / 3.0,
        cap_lo,
        cap_hi,
        cap_hi + right / 3.0,
        cap_hi + 2.0 * right / 3.0,
    ]
}

/// Splits a start-apex-end wall polyline into the seven segments: the cap
/// takes `cap_fraction` of the arc centered on `apex_arc`, each side is
/// cut into thirds of equal arc length.
pub fn partition_boundary(points: &[Point], apex_arc: f64, cap_fraction: f64) -> Vec<Vec<Point>> {
    let cum = geometry::cumulative_arc_length(points);
    let total = *cum.last().unwrap();
    let cuts = segment_cuts(total, apex_arc, cap_fraction);
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(&cuts);
    bounds.push(total);
    bounds
        .windows(2)
        .map(|w| geometry::slice_arc(points, &cum, w[0], w[1]))
        .collect()
}

pub fn partition_segments(aps: &ActivePolynomialPair, frame_index: usize) -> SegmentModel {
    partition_segments_with(aps, frame_index, DEFAULT_CAP_FRACTION)
}

pub fn partition_segments_with(aps: &ActivePolynomialPair, frame_index: usize, cap_fraction: f64) -> SegmentModel {
    let (points, apex_arc) = aps.boundary();
    SegmentModel {
        frame_index,
        segments: partition_boundary(&points, apex_arc, cap_fraction),
    }
}

/// Pixels enclosed by the two walls and the straight base from end back to
/// start.
pub fn chamber_area(aps: &ActivePolynomialPair) -> usize {
    let (points, _) = aps.boundary();
    geometry::count_interior_pixels(&points)
}
