//! Ridge polynomials along the LV wall and the painted barrier wall.
//!
//! Two straight guide lines run from the apex to the annulus points. Anchors
//! spaced evenly on them are pushed horizontally onto the bright wall,
//! stretched into an inner/outer pair, and the quartic fits through those
//! pairs bound the band in which the ridge (brightest pixel per scan line)
//! is searched. The quartics fitted to the ridge points are the ridge
//! polynomials; a 200..255 intensity ramp is painted outward from them so an
//! inside-out contour cannot leak through gaps in the real wall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::{Frame, Landmarks, Pixel};
use crate::polyfit::{fit_wall_curve, Polynomial};

pub const ANCHOR_COUNT: usize = 14;
pub const MIN_RIDGE_POINTS: usize = 10;
/// Smallest horizontal stretch, in pixels, so the search band never
/// collapses near the apex where the local half-width vanishes.
pub const MIN_STRETCH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 when outward is toward larger x.
    pub fn outward(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Straight segment from the apex to one annulus point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuideLine {
    pub from: Point,
    pub to: Point,
}

impl GuideLine {
    pub fn point_at(&self, t: f64) -> Point {
        self.from.lerp(self.to, t)
    }

    /// dy/dx; infinite for a vertical line.
    pub fn slope(&self) -> f64 {
        (self.to.y - self.from.y) / (self.to.x - self.from.x)
    }

    /// x where the line's extension crosses row `y`.
    pub fn x_at(&self, y: f64) -> f64 {
        let dy = self.to.y - self.from.y;
        if dy == 0.0 {
            return self.from.x;
        }
        self.from.x + (y - self.from.y) / dy * (self.to.x - self.from.x)
    }
}

pub fn fit_guide_lines(landmarks: &Landmarks) -> Result<(GuideLine, GuideLine)> {
    let apex = landmarks.apex_seed.to_point();
    let start = landmarks.start.to_point();
    let end = landmarks.end.to_point();
    for (name, p) in [("start", start), ("end", end)] {
        if p.distance(apex) < 1e-9 {
            return Err(Error::Geometry(format!("apex coincides with the {name} point")));
        }
    }
    Ok((
        GuideLine { from: apex, to: start },
        GuideLine { from: apex, to: end },
    ))
}

/// Anchor points per side, ordered apex to base, plus the apex and the
/// chamber midline (apex to the middle of the base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub left: Vec<Point>,
    pub right: Vec<Point>,
    pub apex: Point,
    pub midline: GuideLine,
}

impl AnchorSet {
    pub fn side(&self, side: Side) -> &[Point] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// `count` points per line at parameters `k / (count + 1)`, endpoints excluded.
pub fn place_anchor_points(lines: &(GuideLine, GuideLine), count: usize) -> AnchorSet {
    let place = |line: &GuideLine| {
        (1..=count)
            .map(|k| line.point_at(k as f64 / (count + 1) as f64))
            .collect::<Vec<_>>()
    };
    let (l, r) = lines;
    AnchorSet {
        left: place(l),
        right: place(r),
        apex: l.from,
        midline: GuideLine {
            from: l.from,
            to: l.to.lerp(r.to, 0.5),
        },
    }
}

/// Moves every anchor horizontally to the brightest pixel between the
/// chamber midline and `reach` pixels outward of the anchor (ties go to the
/// pixel nearest the anchor).
pub fn advance_anchors(frame: &Frame, anchors: &AnchorSet, reach: f64) -> AnchorSet {
    let advance = |p: &Point, side: Side| -> Point {
        let y = p.y.round().clamp(0.0, (frame.height() - 1) as f64);
        let mid = anchors.midline.x_at(y);
        let far = p.x + side.outward() * reach;
        let (lo, hi) = if mid < far { (mid, far) } else { (far, mid) };
        let lo = lo.ceil().max(0.0) as usize;
        let hi = (hi.floor() as isize).min(frame.width() as isize - 1);
        if hi < lo as isize {
            return *p;
        }
        let yi = y as usize;
        let best = (lo..=hi as usize)
            .max_by(|&a, &b| {
                frame
                    .get(a, yi)
                    .cmp(&frame.get(b, yi))
                    .then((b as f64 - p.x).abs().total_cmp(&(a as f64 - p.x).abs()))
            })
            .unwrap();
        Point::new(best as f64, p.y)
    };
    AnchorSet {
        left: anchors.left.iter().map(|p| advance(p, Side::Left)).collect(),
        right: anchors.right.iter().map(|p| advance(p, Side::Right)).collect(),
        apex: anchors.apex,
        midline: anchors.midline,
    }
}

/// Inner (toward the midline) and outer points of one anchor, shifted by
/// `delta_frac` of the anchor's distance to the midline, at least
/// [`MIN_STRETCH`]. The outer point is clamped to `[0, width - 1]`.
pub fn stretch_point(anchor: Point, midline_x: f64, delta_frac: f64, width: usize) -> Result<(Point, Point)> {
    if !(delta_frac > 0.0 && delta_frac < 1.0) {
        return Err(Error::Validation(format!("delta_frac must lie in (0, 1), got {delta_frac}")));
    }
    let half_width = (anchor.x - midline_x).abs();
    let shift = (delta_frac * half_width).max(MIN_STRETCH);
    let outward = if anchor.x <= midline_x { -1.0 } else { 1.0 };
    let max_x = (width - 1) as f64;
    let inner = Point::new((anchor.x - outward * shift).clamp(0.0, max_x), anchor.y);
    let outer = Point::new((anchor.x + outward * shift).clamp(0.0, max_x), anchor.y);
    Ok((inner, outer))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchedSide {
    pub inner: Vec<Point>,
    pub outer: Vec<Point>,
}

pub fn stretch_anchors(anchors: &AnchorSet, delta_frac: f64, width: usize) -> Result<(StretchedSide, StretchedSide)> {
    let stretch = |pts: &[Point]| -> Result<StretchedSide> {
        let mut side = StretchedSide {
            inner: Vec::with_capacity(pts.len()),
            outer: Vec::with_capacity(pts.len()),
        };
        for p in pts {
            let (i, o) = stretch_point(*p, anchors.midline.x_at(p.y), delta_frac, width)?;
            side.inner.push(i);
            side.outer.push(o);
        }
        Ok(side)
    };
    Ok((stretch(&anchors.left)?, stretch(&anchors.right)?))
}

/// Search band between two curves `x = P(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoI {
    pub inner: Polynomial,
    pub outer: Polynomial,
    pub side: Side,
    pub y_range: (f64, f64),
}

impl RoI {
    /// Open interval `(lo, hi)` of the band on row `y`.
    pub fn band(&self, y: f64) -> (f64, f64) {
        let (a, b) = (self.inner.eval(y), self.outer.eval(y));
        (a.min(b), a.max(b))
    }
}

pub fn build_roi(inner_pts: &[Point], outer_pts: &[Point], lambda: f64, side: Side) -> Result<RoI> {
    if inner_pts.len() < 5 || outer_pts.len() < 5 {
        return Err(Error::Validation(format!(
            "RoI fits need at least 5 points per border, got {} and {}",
            inner_pts.len(),
            outer_pts.len()
        )));
    }
    let inner = fit_wall_curve(inner_pts, 4, lambda)?;
    let outer = fit_wall_curve(outer_pts, 4, lambda)?;
    let ys = inner_pts.iter().chain(outer_pts).map(|p| p.y);
    let y_range = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    // the outer border must stay outward of the inner one across the range
    let steps = 64;
    for k in 0..=steps {
        let y = y_range.0 + (y_range.1 - y_range.0) * k as f64 / steps as f64;
        let gap = side.outward() * (outer.eval(y) - inner.eval(y));
        if gap <= 0.0 {
            return Err(Error::Geometry(format!(
                "{side:?} search band is empty or inverted at y = {y:.1}"
            )));
        }
    }
    Ok(RoI {
        inner,
        outer,
        side,
        y_range,
    })
}

/// Brightest pixel on one scan line of the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeHit {
    pub point: Point,
    pub intensity: u8,
    /// Peak intensity minus the darkest pixel of the band on that row.
    pub contrast: u8,
}

/// One entry per anchor: the brightest pixel strictly inside the band on
/// the anchor's row, ties broken toward the anchor; `None` where the band
/// holds no pixel.
pub fn detect_ridge_points(frame: &Frame, roi: &RoI, anchors: &[Point]) -> Vec<Option<RidgeHit>> {
    anchors
        .iter()
        .map(|a| {
            let y = a.y.round();
            if y < 0.0 || y > (frame.height() - 1) as f64 {
                return None;
            }
            let yi = y as usize;
            let (lo, hi) = roi.band(y);
            let first = (lo.floor() + 1.0).max(0.0);
            let last = (hi.ceil() - 1.0).min((frame.width() - 1) as f64);
            if last < first {
                return None;
            }
            let (first, last) = (first as usize, last as usize);
            let mut best = first;
            let mut darkest = u8::MAX;
            for x in first..=last {
                let v = frame.get(x, yi);
                darkest = darkest.min(v);
                let bv = frame.get(best, yi);
                if v > bv || (v == bv && (x as f64 - a.x).abs() < (best as f64 - a.x).abs()) {
                    best = x;
                }
            }
            let intensity = frame.get(best, yi);
            Some(RidgeHit {
                point: Point::new(best as f64, y),
                intensity,
                contrast: intensity - darkest,
            })
        })
        .collect()
}

/// Left and right wall ridges as quartics `x = P(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgePolynomialPair {
    pub left: Polynomial,
    pub right: Polynomial,
    /// `(apex.y, base.y)`
    pub y_range: (f64, f64),
}

/// Allowed overlap, in pixels, where the two curves meet at the apex.
const CROSSING_TOLERANCE: f64 = 5.0;

pub fn fit_ridge_polynomials(
    left_pts: &[Point],
    right_pts: &[Point],
    lambda: f64,
    y_range: (f64, f64),
) -> Result<RidgePolynomialPair> {
    for pts in [left_pts, right_pts] {
        if pts.len() < MIN_RIDGE_POINTS {
            return Err(Error::InsufficientRidge {
                found: pts.len(),
                required: MIN_RIDGE_POINTS,
            });
        }
    }
    let left = fit_wall_curve(left_pts, 4, lambda)?;
    let right = fit_wall_curve(right_pts, 4, lambda)?;
    let steps = 128;
    for k in 0..=steps {
        let y = y_range.0 + (y_range.1 - y_range.0) * k as f64 / steps as f64;
        if left.eval(y) - right.eval(y) > CROSSING_TOLERANCE {
            return Err(Error::Geometry(format!("ridge polynomials cross at y = {y:.1} by {:.2} px", left.eval(y) - right.eval(y))));
        }
    }
    Ok(RidgePolynomialPair {
        left,
        right,
        y_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallStyle {
    pub thickness: usize,
    pub ramp: (u8, u8),
}

impl Default for WallStyle {
    fn default() -> Self {
        WallStyle {
            thickness: 6,
            ramp: (200, 255),
        }
    }
}

impl WallStyle {
    fn layer_value(&self, k: usize) -> u8 {
        if self.thickness <= 1 {
            return self.ramp.0;
        }
        let (a, b) = (self.ramp.0 as f64, self.ramp.1 as f64);
        (a + (b - a) * k as f64 / (self.thickness - 1) as f64).round() as u8
    }
}

/// Paints `thickness` pixels outward of each ridge curve on every row of the
/// curves' range, ramping from `ramp.0` at the curve to `ramp.1`. The rows
/// just above the apex are closed the same way so the two walls join.
pub fn paint_wall(frame: &Frame, rps: &RidgePolynomialPair, style: &WallStyle) -> Frame {
    let mut out = frame.clone();
    if style.thickness == 0 {
        return out;
    }
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let top = rps.y_range.0.ceil().max(0.0) as isize;
    let bottom = (rps.y_range.1.floor() as isize).min(h - 1);
    let mut paint = |x: isize, y: isize, v: u8| {
        if x >= 0 && x < w && y >= 0 && y < h {
            out.set(x as usize, y as usize, v);
        }
    };
    for y in top..=bottom {
        let yf = y as f64;
        let xl = rps.left.eval(yf).round() as isize;
        let xr = rps.right.eval(yf).round() as isize;
        for k in 0..style.thickness {
            let v = style.layer_value(k);
            paint(xl - k as isize, y, v);
            paint(xr + k as isize, y, v);
        }
    }
    if top <= bottom {
        let yf = top as f64;
        let xl = rps.left.eval(yf).round() as isize;
        let xr = rps.right.eval(yf).round() as isize;
        let (lo, hi) = (xl.min(xr), xl.max(xr));
        let t = style.thickness as isize;
        for k in 1..=style.thickness {
            let v = style.layer_value(k - 1);
            for x in lo - t..=hi + t {
                paint(x, top - k as isize, v);
            }
        }
    }
    out
}

/// Topmost ridge pixel near the seed: the row of maximum intensity is found
/// in every column of a `(2 radius + 1)` square window and the column whose
/// maximum sits highest wins (ties toward the seed column).
pub fn refine_apex(frame: &Frame, seed: Pixel, radius: u32) -> Pixel {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let r = radius as i64;
    let (sx, sy) = (seed.x as i64, seed.y as i64);
    let x0 = (sx - r).max(0);
    let x1 = (sx + r).min(w - 1);
    let y0 = (sy - r).max(0);
    let y1 = (sy + r).min(h - 1);
    let mut best: Option<(i64, i64)> = None;
    for x in x0..=x1 {
        let mut col_best = y0;
        for y in y0..=y1 {
            let v = frame.get(x as usize, y as usize);
            let b = frame.get(x as usize, col_best as usize);
            if v > b || (v == b && (y - sy).abs() < (col_best - sy).abs()) {
                col_best = y;
            }
        }
        best = match best {
            None => Some((x, col_best)),
            Some((bx, by)) => {
                if col_best < by || (col_best == by && (x - sx).abs() < (bx - sx).abs()) {
                    Some((x, col_best))
                } else {
                    Some((bx, by))
                }
            }
        };
    }
    let (x, y) = best.unwrap_or((sx, sy));
    Pixel::new(x as u32, y as u32)
}
