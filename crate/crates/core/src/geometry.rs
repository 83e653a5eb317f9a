//! Planar points and polyline helpers.
//!
//! Coordinates are pixel units with the origin at the top-left pixel center,
//! x growing rightward and y growing downward.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point { x: v[0], y: v[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn translate(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Total length of an open polyline.
pub fn arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Cumulative arc length at every vertex, starting at 0.
pub fn cumulative_arc_length(points: &[Point]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(points.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in points.windows(2) {
        total += w[0].distance(w[1]);
        acc.push(total);
    }
    acc
}

/// Point at arc-length position `s` along the polyline (clamped to its ends).
pub fn point_at_arc(points: &[Point], cumulative: &[f64], s: f64) -> Point {
    debug_assert_eq!(points.len(), cumulative.len());
    let total = *cumulative.last().unwrap_or(&0.0);
    if points.len() == 1 || s <= 0.0 {
        return points[0];
    }
    if s >= total {
        return points[points.len() - 1];
    }
    let idx = match cumulative.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => return points[i],
        Err(i) => i,
    };
    let (a, b) = (points[idx - 1], points[idx]);
    let seg = cumulative[idx] - cumulative[idx - 1];
    if seg <= 0.0 {
        return a;
    }
    a.lerp(b, (s - cumulative[idx - 1]) / seg)
}

/// `count` points at equal arc-length spacing, both endpoints included.
pub fn resample_equal_arc(points: &[Point], count: usize) -> Vec<Point> {
    assert!(!points.is_empty(), "cannot resample an empty polyline");
    if count == 1 {
        return vec![points[0]];
    }
    let cumulative = cumulative_arc_length(points);
    let total = *cumulative.last().unwrap();
    (0..count)
        .map(|i| {
            let s = total * i as f64 / (count - 1) as f64;
            point_at_arc(points, &cumulative, s)
        })
        .collect()
}

/// Sub-polyline between arc positions `from` and `to` (`from <= to`), with
/// interpolated end vertices.
pub fn slice_arc(points: &[Point], cumulative: &[f64], from: f64, to: f64) -> Vec<Point> {
    let mut out = vec![point_at_arc(points, cumulative, from)];
    for (p, &s) in points.iter().zip(cumulative) {
        if s > from && s < to {
            out.push(*p);
        }
    }
    out.push(point_at_arc(points, cumulative, to));
    out
}

/// Distance from `p` to the segment `a`-`b` and the segment parameter of the
/// closest point.
pub fn distance_to_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.distance(a.lerp(b, t)), t)
}

/// Closest location on an open polyline: (distance, arc position).
pub fn project_onto_polyline(points: &[Point], cumulative: &[f64], p: Point) -> (f64, f64) {
    if points.len() == 1 {
        return (p.distance(points[0]), 0.0);
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..points.len() - 1 {
        let (d, t) = distance_to_segment(p, points[i], points[i + 1]);
        if d < best.0 {
            best = (d, cumulative[i] + t * (cumulative[i + 1] - cumulative[i]));
        }
    }
    best
}

/// Signed shoelace area of a closed polygon; positive when the vertices run
/// counter-clockwise in (x, y) coordinates.
pub fn signed_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Area-weighted centroid of a closed polygon; vertex mean when degenerate.
pub fn centroid(polygon: &[Point]) -> Point {
    let n = polygon.len();
    let area = signed_area(polygon);
    if area.abs() < 1e-12 {
        let sx: f64 = polygon.iter().map(|p| p.x).sum();
        let sy: f64 = polygon.iter().map(|p| p.y).sum();
        return Point::new(sx / n as f64, sy / n as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        let cross = a.x * b.y - b.x * a.y;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    Point::new(cx / (6.0 * area), cy / (6.0 * area))
}

/// Sorted x-coordinates where the horizontal line at `y` crosses the closed
/// polygon's edges (half-open rule, so shared vertices count once).
pub fn scanline_crossings(polygon: &[Point], y: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = polygon.len();
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        if (a.y <= y) != (b.y <= y) {
            let t = (y - a.y) / (b.y - a.y);
            out.push(a.x + t * (b.x - a.x));
        }
    }
    out.sort_by(f64::total_cmp);
}

/// Even-odd point-in-polygon test.
pub fn contains(polygon: &[Point], p: Point) -> bool {
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Number of pixels covered by the closed polygon: pixel centers inside it
/// under the top-left fill rule (a center on a left or top edge counts, one
/// on a right or bottom edge does not), so an axis-aligned `w x h` rectangle
/// with integer corners covers exactly `w * h` pixels.
pub fn count_interior_pixels(polygon: &[Point]) -> usize {
    if polygon.len() < 3 {
        return 0;
    }
    let ymin = polygon.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = polygon.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let mut crossings = Vec::new();
    let mut count = 0usize;
    let mut y = ymin.ceil();
    while y < ymax {
        scanline_crossings(polygon, y, &mut crossings);
        for pair in crossings.chunks_exact(2) {
            let (lo, hi) = (pair[0].ceil(), pair[1].ceil());
            if hi > lo {
                count += (hi - lo) as usize;
            }
        }
        y += 1.0;
    }
    count
}
