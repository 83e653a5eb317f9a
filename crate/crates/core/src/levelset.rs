//! Level-set fields: initialization from a polygon, redistancing and
//! zero-contour extraction.
//!
//! Inside is `phi > 0`. Grid sample `(x, y)` sits at pixel center `(x, y)`.

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    width: usize,
    height: usize,
    phi: Vec<f64>,
    pub iteration: usize,
}

impl LevelSetField {
    pub fn new(width: usize, height: usize, phi: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 || phi.len() != width * height {
            return Err(Error::Validation(format!(
                "level set of {width}x{height} needs {} values, got {}",
                width * height,
                phi.len()
            )));
        }
        Ok(LevelSetField {
            width,
            height,
            phi,
            iteration: 0,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut phi = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                phi.push(f(x as f64, y as f64));
            }
        }
        LevelSetField::new(width, height, phi).expect("dimensions consistent")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub(crate) fn phi_mut(&mut self) -> &mut [f64] {
        &mut self.phi
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    pub fn has_both_signs(&self) -> bool {
        self.phi.iter().any(|&v| v >= 0.0) && self.phi.iter().any(|&v| v < 0.0)
    }

    pub fn inside_count(&self) -> usize {
        self.phi.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn negated(&self) -> LevelSetField {
        LevelSetField {
            width: self.width,
            height: self.height,
            phi: self.phi.iter().map(|v| -v).collect(),
            iteration: self.iteration,
        }
    }
}

/// Points this close to the polygon get exact distances during
/// initialization; farther ones are filled by fast sweeping.
const EXACT_BAND: f64 = 3.0;

/// Signed distance to a closed polygon, positive inside.
pub fn initialize_levelset(contour: &[Point], width: usize, height: usize) -> Result<LevelSetField> {
    if contour.len() < 3 {
        return Err(Error::Geometry(format!(
            "initial contour needs at least 3 vertices, got {}",
            contour.len()
        )));
    }
    if geometry::signed_area(contour).abs() < 1e-9 {
        return Err(Error::Geometry("initial contour encloses no area".into()));
    }
    let (w, h) = (width, height);
    let pw = w + 2;
    let at = |x: usize, y: usize| (y + 1) * pw + x + 1;
    let mut d = vec![f64::INFINITY; pw * (h + 2)];
    let n = contour.len();
    for i in 0..n {
        let (a, b) = (contour[i], contour[(i + 1) % n]);
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0);
        let x0 = clip(a.x.min(b.x) - EXACT_BAND, w).floor() as usize;
        let x1 = clip(a.x.max(b.x) + EXACT_BAND, w).ceil() as usize;
        let y0 = clip(a.y.min(b.y) - EXACT_BAND, h).floor() as usize;
        let y1 = clip(a.y.max(b.y) + EXACT_BAND, h).ceil() as usize;
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 > 0.0 {
                    (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ex, ey) = (a.x + t * dx - px, a.y + t * dy - py);
                let k = at(x, y);
                d[k] = d[k].min((ex * ex + ey * ey).sqrt());
            }
        }
    }
    // only values inside the band are certain to be the true minimum
    let mut fixed = vec![false; d.len()];
    for (dist, f) in d.iter_mut().zip(fixed.iter_mut()) {
        if *dist <= EXACT_BAND {
            *f = true;
        } else {
            *dist = f64::INFINITY;
        }
    }
    let runs: Vec<_> = (0..h).map(|y| (y, 0, w)).collect();
    fast_sweep(&mut d, &fixed, pw, &runs, f64::INFINITY);
    let mut phi = Vec::with_capacity(w * h);
    let mut crossings = Vec::new();
    for y in 0..h {
        geometry::scanline_crossings(contour, y as f64, &mut crossings);
        for x in 0..w {
            let xf = x as f64;
            let inside = crossings.iter().filter(|&&c| c > xf).count() % 2 == 1;
            let dist = d[at(x, y)];
            phi.push(if inside { dist } else { -dist });
        }
    }
    LevelSetField::new(width, height, phi)
}

/// Rebuilds `phi` as a signed distance to its current zero level set.
///
/// Grid points adjacent to a sign change get their distance from the linear
/// crossing estimates along grid edges; the rest is filled by fast sweeping
/// of the eikonal equation `|grad d| = 1`.
pub fn redistance(field: &mut LevelSetField) {
    redistance_capped(field, f64::INFINITY);
}

/// Like [`redistance`] but only propagates distances up to `cap`; points
/// farther from the front keep their old values. Returns the indices that
/// were rewritten.
pub fn redistance_capped(field: &mut LevelSetField, cap: f64) -> Vec<usize> {
    let (w, h) = (field.width, field.height);
    let phi = &field.phi;
    let mut crossing = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = phi[i] > 0.0;
            if x + 1 < w && (phi[i + 1] > 0.0) != s {
                crossing[i] = true;
                crossing[i + 1] = true;
            }
            if y + 1 < h && (phi[i + w] > 0.0) != s {
                crossing[i] = true;
                crossing[i + w] = true;
            }
        }
    }
    let runs = if cap.is_finite() {
        // square neighborhoods of the crossing points cover every point
        // that can end up closer than the cap
        let c = cap.ceil() as usize + 1;
        let mut cover = vec![0i32; (w + 1) * h];
        for (i, _) in crossing.iter().enumerate().filter(|(_, &c)| c) {
            let (x, y) = (i % w, i / w);
            let (x0, x1) = (x.saturating_sub(c), (x + c + 1).min(w));
            for yy in y.saturating_sub(c)..(y + c + 1).min(h) {
                cover[yy * (w + 1) + x0] += 1;
                cover[yy * (w + 1) + x1] -= 1;
            }
        }
        for row in cover.chunks_mut(w + 1) {
            let mut acc = 0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        row_runs(w, h, |i| cover[(i / w) * (w + 1) + i % w] > 0)
    } else {
        (0..h).map(|y| (y, 0, w)).collect()
    };
    let pw = w + 2;
    let pad = |i: usize| (i / w + 1) * pw + i % w + 1;
    let mut d = vec![f64::INFINITY; pw * (h + 2)];
    let mut fixed = vec![false; pw * (h + 2)];
    let mut any = false;
    for (i, _) in crossing.iter().enumerate().filter(|(_, &c)| c) {
        if let Some(dist) = crossing_distance(phi, w, h, i % w, i / w) {
            d[pad(i)] = dist;
            fixed[pad(i)] = true;
            any = true;
        }
    }
    if !any {
        return Vec::new();
    }
    fast_sweep(&mut d, &fixed, pw, &runs, cap);
    let mut touched = Vec::new();
    for &(y, x0, x1) in &runs {
        for x in x0..x1 {
            let i = y * w + x;
            let dist = d[pad(i)];
            if dist.is_finite() {
                let p = &mut field.phi[i];
                *p = if *p > 0.0 { dist } else { -dist };
                touched.push(i);
            }
        }
    }
    touched
}

/// Half-open row runs `(y, x0, x1)` of the points where `keep` holds.
fn row_runs(w: usize, h: usize, keep: impl Fn(usize) -> bool) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    for y in 0..h {
        let mut x = 0;
        while x < w {
            if !keep(y * w + x) {
                x += 1;
                continue;
            }
            let x0 = x;
            while x < w && keep(y * w + x) {
                x += 1;
            }
            runs.push((y, x0, x));
        }
    }
    runs
}

/// Distance from grid point `(x, y)` to the zero level set when a sign
/// change occurs on one of its grid edges, from linear crossing estimates.
fn crossing_distance(phi: &[f64], w: usize, h: usize, x: usize, y: usize) -> Option<f64> {
    let i = y * w + x;
    let v = phi[i];
    let inside = v > 0.0;
    // fractional distance to the nearest crossing along each axis
    let mut tx = f64::INFINITY;
    let mut ty = f64::INFINITY;
    let probe = |j: usize, t: &mut f64| {
        let u = phi[j];
        if (u > 0.0) != inside {
            let denom = v - u;
            let frac = if denom != 0.0 { v / denom } else { 0.5 };
            *t = t.min(frac.clamp(0.0, 1.0));
        }
    };
    if x > 0 {
        probe(i - 1, &mut tx);
    }
    if x + 1 < w {
        probe(i + 1, &mut tx);
    }
    if y > 0 {
        probe(i - w, &mut ty);
    }
    if y + 1 < h {
        probe(i + w, &mut ty);
    }
    match (tx.is_finite(), ty.is_finite()) {
        (true, true) => {
            let r = (tx * tx + ty * ty).sqrt();
            Some(if r > 0.0 { tx * ty / r } else { 0.0 })
        }
        (true, false) => Some(tx),
        (false, true) => Some(ty),
        (false, false) => None,
    }
}

/// Four alternating-direction Gauss-Seidel sweeps of the eikonal update
/// over the given runs, enough for the distance function on a regular
/// grid. `d` is padded with one ring of infinite distances (row stride
/// `pw`) so the update needs no bounds checks; points outside the runs stay
/// infinite and act as walls. Values at or beyond `cap` are not produced.
fn fast_sweep(d: &mut [f64], fixed: &[bool], pw: usize, runs: &[(usize, usize, usize)], cap: f64) {
    let update = |d: &mut [f64], i: usize| {
        if fixed[i] {
            return;
        }
        let a = d[i - 1].min(d[i + 1]);
        let b = d[i - pw].min(d[i + pw]);
        let lo = a.min(b);
        if lo >= cap {
            return;
        }
        let diff = a - b;
        let candidate = if diff.abs() >= 1.0 {
            lo + 1.0
        } else {
            0.5 * (a + b + (2.0 - diff * diff).sqrt())
        };
        if candidate < d[i] {
            d[i] = candidate;
        }
    };
    let at = |y: usize, x: usize| (y + 1) * pw + x + 1;
    for &(y, x0, x1) in runs {
        for x in x0..x1 {
            update(d, at(y, x));
        }
    }
    for &(y, x0, x1) in runs {
        for x in (x0..x1).rev() {
            update(d, at(y, x));
        }
    }
    for &(y, x0, x1) in runs.iter().rev() {
        for x in x0..x1 {
            update(d, at(y, x));
        }
    }
    for &(y, x0, x1) in runs.iter().rev() {
        for x in (x0..x1).rev() {
            update(d, at(y, x));
        }
    }
}

/// Zero-level polyline of the field: the longest connected piece, with the
/// inside region on its left in (x, y) coordinates. Closed curves repeat
/// their first vertex at the end.
pub fn extract_contour(field: &LevelSetField) -> Result<Vec<Point>> {
    let mut pieces = extract_all_contours(field);
    if pieces.is_empty() {
        return Err(Error::NoZeroCrossing);
    }
    let best = pieces
        .iter()
        .enumerate()
        .max_by(|a, b| {
            geometry::arc_length(a.1)
                .total_cmp(&geometry::arc_length(b.1))
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok(pieces.swap_remove(best))
}

/// Every connected zero-level polyline (marching squares).
pub fn extract_all_contours(field: &LevelSetField) -> Vec<Vec<Point>> {
    let (w, h) = (field.width, field.height);
    let phi = &field.phi;
    // edge ids: horizontal edge (x,y)-(x+1,y) is 2*(y*w+x), vertical
    // edge (x,y)-(x,y+1) is 2*(y*w+x)+1
    let h_edge = |x: usize, y: usize| 2 * (y * w + x);
    let v_edge = |x: usize, y: usize| 2 * (y * w + x) + 1;
    let crossing = |e: usize| -> Point {
        let base = e / 2;
        let (x, y) = (base % w, base / w);
        let (j, dx, dy) = if e % 2 == 0 { (base + 1, 1.0, 0.0) } else { (base + w, 0.0, 1.0) };
        let (a, b) = (phi[base], phi[j]);
        let t = if a != b { (a / (a - b)).clamp(0.0, 1.0) } else { 0.5 };
        Point::new(x as f64 + t * dx, y as f64 + t * dy)
    };

    let mut segments: Vec<(usize, usize)> = Vec::new();
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let corners = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
            let vals = corners.map(|(cx, cy)| phi[cy * w + cx]);
            let ins = vals.map(|v| v > 0.0);
            let n_in = ins.iter().filter(|&&b| b).count();
            if n_in == 0 || n_in == 4 {
                continue;
            }
            // edge k joins corner k and corner k+1
            let edges = [h_edge(x, y), v_edge(x + 1, y), h_edge(x, y + 1), v_edge(x, y)];
            let crossed: Vec<usize> = (0..4).filter(|&k| ins[k] != ins[(k + 1) % 4]).collect();
            let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2);
            if crossed.len() == 2 {
                pairs.push((crossed[0], crossed[1]));
            } else {
                // saddle: the cell-center value decides which corners connect
                let center_in = vals.iter().sum::<f64>() > 0.0;
                for k in 0..4 {
                    if ins[k] != center_in {
                        pairs.push(((k + 3) % 4, k));
                    }
                }
            }
            for (ka, kb) in pairs {
                let (ea, eb) = (edges[ka], edges[kb]);
                let (pa, pb) = (crossing(ea), crossing(eb));
                // the inside corner of edge ka must sit on the left of pa->pb
                let corner_in = if ins[ka] { ka } else { (ka + 1) % 4 };
                let c = corners[corner_in];
                let cross = (pb.x - pa.x) * (c.1 as f64 - pa.y) - (pb.y - pa.y) * (c.0 as f64 - pa.x);
                let cross = if cross.abs() > 1e-12 {
                    cross
                } else {
                    let corner_in = if ins[kb] { kb } else { (kb + 1) % 4 };
                    let c = corners[corner_in];
                    (pb.x - pa.x) * (c.1 as f64 - pa.y) - (pb.y - pa.y) * (c.0 as f64 - pa.x)
                };
                if cross > 0.0 {
                    segments.push((ea, eb));
                } else {
                    segments.push((eb, ea));
                }
            }
        }
    }

    const NONE: usize = usize::MAX;
    let mut next = vec![NONE; 2 * w * h];
    let mut has_prev = vec![false; 2 * w * h];
    for (si, &(a, b)) in segments.iter().enumerate() {
        next[a] = si;
        has_prev[b] = true;
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| {
        let mut edges = vec![segments[start].0];
        let mut si = start;
        loop {
            used[si] = true;
            let end = segments[si].1;
            edges.push(end);
            let n = next[end];
            if n == NONE || used[n] {
                break;
            }
            si = n;
        }
        edges.into_iter().map(crossing).collect::<Vec<Point>>()
    };
    // open chains start at an edge nobody ends on
    for si in 0..segments.len() {
        if !used[si] && !has_prev[segments[si].0] {
            chains.push(walk(si, &mut used));
        }
    }
    for si in 0..segments.len() {
        if !used[si] {
            chains.push(walk(si, &mut used));
        }
    }
    chains
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_sdf(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| r - (x - cx).hypot(y - cy)
    }

    fn polygon_circle(cx: f64, cy: f64, r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Point::new(cx + r * a.cos(), cy + r * a.sin())
            })
            .collect()
    }

    #[test]
    fn square_signs() {
        let sq = vec![
            Point::new(10.0, 10.0),
            Point::new(20.0, 10.0),
            Point::new(20.0, 20.0),
            Point::new(10.0, 20.0),
        ];
        let f = initialize_levelset(&sq, 32, 32).unwrap();
        assert!(f.at(15, 15) > 0.0);
        assert!(f.at(0, 0) < 0.0);
        assert!(f.at(10, 14).abs() <= 0.71);
        assert!(f.at(20, 20).abs() <= 0.71);
    }

    #[test]
    fn circle_center_distance() {
        let f = initialize_levelset(&polygon_circle(16.0, 16.0, 8.0, 256), 32, 32).unwrap();
        // exhaustive oracle: distance from the center to every polygon edge
        assert!((f.at(16, 16) - 8.0).abs() < 1.0);
        for (x, y) in [(8, 16), (24, 16), (16, 8), (16, 24)] {
            assert!(f.at(x, y).abs() <= 0.71);
        }
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let two = vec![Point::new(1.0, 1.0), Point::new(5.0, 5.0)];
        assert!(matches!(initialize_levelset(&two, 8, 8), Err(Error::Geometry(_))));
    }

    #[test]
    fn redistance_restores_unit_gradient() {
        let mut f = LevelSetField::from_fn(48, 48, |x, y| 3.0 * circle_sdf(24.0, 24.0, 10.0)(x, y));
        redistance(&mut f);
        let exact = circle_sdf(24.0, 24.0, 10.0);
        let worst = (0..48 * 48)
            .map(|i| (f.phi()[i] - exact((i % 48) as f64, (i / 48) as f64)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1.0, "worst {worst}");
        let near = (0..48 * 48)
            .filter(|&i| exact((i % 48) as f64, (i / 48) as f64).abs() < 3.0)
            .map(|i| (f.phi()[i] - exact((i % 48) as f64, (i / 48) as f64)).abs())
            .fold(0.0, f64::max);
        assert!(near < 0.3, "near {near}");
    }

    #[test]
    fn contour_of_circle() {
        let f = LevelSetField::from_fn(32, 32, circle_sdf(16.0, 16.0, 8.0));
        let c = extract_contour(&f).unwrap();
        assert_eq!(c.first(), c.last());
        for p in &c {
            assert!(((p.x - 16.0).hypot(p.y - 16.0) - 8.0).abs() <= 0.5);
        }
        assert!(geometry::signed_area(&c[..c.len() - 1]) > 0.0);
    }

    #[test]
    fn contour_of_linear_field() {
        let f = LevelSetField::from_fn(32, 32, |_, y| y - 16.0);
        let c = extract_contour(&f).unwrap();
        assert!(c.iter().all(|p| (p.y - 16.0).abs() < 1e-12));
        assert!(geometry::arc_length(&c) >= 30.9);
    }

    #[test]
    fn inverted_field_reverses_orientation() {
        let f = LevelSetField::from_fn(32, 32, circle_sdf(15.3, 16.7, 7.4));
        let a = extract_contour(&f).unwrap();
        let b = extract_contour(&f.negated()).unwrap();
        assert_eq!(a.len(), b.len());
        let area_a = geometry::signed_area(&a[..a.len() - 1]);
        let area_b = geometry::signed_area(&b[..b.len() - 1]);
        assert!((area_a + area_b).abs() < 1e-9);
        for p in &a {
            assert!(b.iter().any(|q| q.distance(*p) < 1e-12));
        }
    }

    #[test]
    fn no_crossing_is_an_error() {
        let f = LevelSetField::from_fn(8, 8, |_, _| -1.0);
        assert!(matches!(extract_contour(&f), Err(Error::NoZeroCrossing)));
    }
}
