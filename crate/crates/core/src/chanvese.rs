//! Two-phase Chan-Vese active contour without edges.
//!
//! Gradient descent on
//! `F = mu * len(C) + nu * area(inside) + l1 * sum_in (u - c1)^2 + l2 * sum_out (u - c2)^2`
//! with the smoothed Heaviside `H(z) = 1/2 + atan(z / eps) / pi`:
//!
//! `phi_t = delta(phi) * [mu * div(grad phi / |grad phi|) - nu - l1 (u - c1)^2 + l2 (u - c2)^2]`
//!
//! The explicit step is rescaled every iteration so that no grid value moves
//! by more than `dt`, and capped by the diffusive stability bound of the
//! curvature term, `pi * eps / (4 mu)`. Intensities stay on the 0..255 scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Frame;
use crate::levelset::{redistance, redistance_capped, LevelSetField};

use std::f64::consts::{FRAC_1_PI, PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChanVeseParams {
    pub mu: f64,
    pub nu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Largest per-step change of any `phi` value, in pixels.
    pub dt: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Redistance `phi` every this many iterations; 0 disables it.
    pub reinit_every: usize,
    /// Only grid points with `|phi|` below this are updated; 0 updates the
    /// whole grid. Pairs with frequent redistancing.
    pub narrow_band: f64,
}

impl Default for ChanVeseParams {
    fn default() -> Self {
        ChanVeseParams {
            mu: 0.2 * 255.0 * 255.0,
            nu: 0.0,
            lambda1: 1.0,
            lambda2: 1.0,
            dt: 0.5,
            epsilon: 1.0,
            iterations: 300,
            reinit_every: 50,
            narrow_band: 0.0,
        }
    }
}

impl ChanVeseParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 > 0.0
            && self.lambda2 > 0.0
            && self.mu >= 0.0
            && self.nu >= 0.0
            && self.dt > 0.0
            && self.epsilon > 0.0
            && self.iterations >= 1
            && self.narrow_band >= 0.0
            && [self.mu, self.nu, self.lambda1, self.lambda2, self.dt, self.epsilon, self.narrow_band]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid Chan-Vese parameters: {self:?}")))
        }
    }
}

#[inline]
pub fn heaviside(z: f64, epsilon: f64) -> f64 {
    0.5 + FRAC_1_PI * (z / epsilon).atan()
}

#[inline]
pub fn dirac(z: f64, epsilon: f64) -> f64 {
    FRAC_1_PI * epsilon / (epsilon * epsilon + z * z)
}

fn check_dims(field: &LevelSetField, frame: &Frame) -> Result<()> {
    if field.width() != frame.width() || field.height() != frame.height() {
        return Err(Error::Validation(format!(
            "level set {}x{} does not match frame {}x{}",
            field.width(),
            field.height(),
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

fn means(phi: &[f64], u: &[f64], epsilon: f64) -> (f64, f64) {
    let (mut s1, mut w1, mut s2, mut w2) = (0.0, 0.0, 0.0, 0.0);
    let (mut any_in, mut any_out) = (false, false);
    for (&p, &v) in phi.iter().zip(u) {
        if p >= 0.0 {
            any_in = true;
        } else {
            any_out = true;
        }
        let hv = heaviside(p, epsilon);
        s1 += hv * v;
        w1 += hv;
        s2 += (1.0 - hv) * v;
        w2 += 1.0 - hv;
    }
    if !(any_in && any_out) || w1 <= 0.0 || w2 <= 0.0 {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        return (mean, mean);
    }
    (s1 / w1, s2 / w2)
}

/// Heaviside-weighted mean intensities inside (`c1`) and outside (`c2`).
/// When either sign region is empty both are the global mean.
pub fn region_means(field: &LevelSetField, frame: &Frame) -> Result<(f64, f64)> {
    check_dims(field, frame)?;
    let u: Vec<f64> = frame.pixels().iter().map(|&v| v as f64).collect();
    Ok(means(field.phi(), &u, 1.0))
}

/// Terms of the discrete energy, each already multiplied by its weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub length: f64,
    pub area: f64,
    pub inside: f64,
    pub outside: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.length + self.area + self.inside + self.outside
    }
}

pub fn energy_terms(field: &LevelSetField, frame: &Frame, params: &ChanVeseParams) -> Result<EnergyTerms> {
    check_dims(field, frame)?;
    let u: Vec<f64> = frame.pixels().iter().map(|&v| v as f64).collect();
    Ok(energy_of(field.phi(), &u, field.width(), field.height(), params))
}

fn energy_of(phi: &[f64], u: &[f64], w: usize, h: usize, params: &ChanVeseParams) -> EnergyTerms {
    let eps = params.epsilon;
    let (c1, c2) = means(phi, u, eps);
    let mut t = EnergyTerms::default();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = phi[i];
            let gx = if x + 1 < w { phi[i + 1] - p } else { 0.0 };
            let gy = if y + 1 < h { phi[i + w] - p } else { 0.0 };
            let hv = heaviside(p, eps);
            t.length += dirac(p, eps) * (gx * gx + gy * gy).sqrt();
            t.area += hv;
            t.inside += (u[i] - c1).powi(2) * hv;
            t.outside += (u[i] - c2).powi(2) * (1.0 - hv);
        }
    }
    t.length *= params.mu;
    t.area *= params.nu;
    t.inside *= params.lambda1;
    t.outside *= params.lambda2;
    t
}

pub fn total_energy(field: &LevelSetField, frame: &Frame, params: &ChanVeseParams) -> Result<f64> {
    Ok(energy_terms(field, frame, params)?.total())
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * (n - 1) - i as usize
    } else {
        i as usize
    }
}

/// Mean curvature `div(grad phi / |grad phi|)` at one grid point by central
/// differences with mirrored borders, clamped to one inverse pixel.
#[inline]
fn curvature_at(phi: &[f64], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let ym = mirror(y as isize - 1, h) * w;
    let yp = mirror(y as isize + 1, h) * w;
    let yc = y * w;
    let xm = mirror(x as isize - 1, w);
    let xp = mirror(x as isize + 1, w);
    let c = phi[yc + x];
    let fx = 0.5 * (phi[yc + xp] - phi[yc + xm]);
    let fy = 0.5 * (phi[yp + x] - phi[ym + x]);
    let fxx = phi[yc + xp] - 2.0 * c + phi[yc + xm];
    let fyy = phi[yp + x] - 2.0 * c + phi[ym + x];
    let fxy = 0.25 * (phi[yp + xp] - phi[ym + xp] - phi[yp + xm] + phi[ym + xm]);
    let g2 = (fx * fx + fy * fy).max(1e-16);
    let k = (fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx) / (g2 * g2.sqrt());
    k.clamp(-1.0, 1.0)
}

/// Running sums behind the region means, kept in step with the cached
/// Heaviside values so a descent step only pays for the points it moved.
struct RegionSums {
    /// sum of H * u and of H
    s1: f64,
    w1: f64,
    inside: usize,
    u_total: f64,
    n: usize,
}

impl RegionSums {
    fn new(phi: &[f64], hv: &[f64], u: &[f64]) -> Self {
        let mut sums = RegionSums {
            s1: 0.0,
            w1: 0.0,
            inside: 0,
            u_total: u.iter().sum(),
            n: u.len(),
        };
        for ((&p, &hh), &v) in phi.iter().zip(hv).zip(u) {
            sums.s1 += hh * v;
            sums.w1 += hh;
            sums.inside += usize::from(p >= 0.0);
        }
        sums
    }

    fn update(&mut self, u: f64, old: (f64, f64), new: (f64, f64)) {
        self.s1 += (new.1 - old.1) * u;
        self.w1 += new.1 - old.1;
        self.inside = self.inside + usize::from(new.0 >= 0.0) - usize::from(old.0 >= 0.0);
    }

    /// `(c1, c2)`, both the global mean when either region is empty.
    fn means(&self) -> (f64, f64) {
        let w2 = self.n as f64 - self.w1;
        if self.inside == 0 || self.inside == self.n || self.w1 <= 0.0 || w2 <= 0.0 {
            let mean = self.u_total / self.n as f64;
            return (mean, mean);
        }
        (self.s1 / self.w1, (self.u_total - self.s1) / w2)
    }
}

/// Runs `params.iterations` descent steps.
pub fn evolve(field: &LevelSetField, frame: &Frame, params: &ChanVeseParams) -> Result<LevelSetField> {
    evolve_traced(field, frame, params, 0).map(|(f, _)| f)
}

/// Like [`evolve`], also recording the energy before the first step and
/// after every `record_every` steps (never when 0).
pub fn evolve_traced(
    field: &LevelSetField,
    frame: &Frame,
    params: &ChanVeseParams,
    record_every: usize,
) -> Result<(LevelSetField, Vec<f64>)> {
    params.validate()?;
    check_dims(field, frame)?;
    let (w, h) = (field.width(), field.height());
    let u: Vec<f64> = frame.pixels().iter().map(|&v| v as f64).collect();
    let mut out = field.clone();
    let mut trace = Vec::new();
    if record_every > 0 {
        trace.push(energy_of(out.phi(), &u, w, h, params).total());
    }
    let eps = params.epsilon;
    let tau_cap = if params.mu > 0.0 {
        0.25 * PI * eps / params.mu
    } else {
        f64::INFINITY
    };
    let band = if params.narrow_band > 0.0 {
        params.narrow_band
    } else {
        f64::INFINITY
    };
    let mut hv: Vec<f64> = out.phi().iter().map(|&p| heaviside(p, eps)).collect();
    let mut sums = RegionSums::new(out.phi(), &hv, &u);
    let mut active: Vec<usize> = Vec::with_capacity(w * h);
    let mut force: Vec<f64> = Vec::with_capacity(w * h);
    for step in 1..=params.iterations {
        let phi = out.phi_mut();
        let (c1, c2) = sums.means();
        active.clear();
        active.extend((0..w * h).filter(|&i| phi[i].abs() < band));
        force.clear();
        let mut fmax = 0.0f64;
        for &i in &active {
            let kappa = curvature_at(phi, w, h, i % w, i / w);
            let region = -params.lambda1 * (u[i] - c1).powi(2) + params.lambda2 * (u[i] - c2).powi(2);
            let f = dirac(phi[i], eps) * (params.mu * kappa - params.nu + region);
            force.push(f);
            fmax = fmax.max(f.abs());
        }
        if !fmax.is_finite() {
            return Err(Error::Divergence { iteration: step });
        }
        if fmax > 0.0 {
            let tau = (params.dt / fmax).min(tau_cap);
            for (&i, f) in active.iter().zip(&force) {
                let old = (phi[i], hv[i]);
                phi[i] += tau * f;
                hv[i] = heaviside(phi[i], eps);
                sums.update(u[i], old, (phi[i], hv[i]));
            }
        }
        if active.iter().any(|&i| !phi[i].is_finite()) {
            return Err(Error::Divergence { iteration: step });
        }
        out.iteration += 1;
        // logged before any reinitialization at this step, which moves the
        // smoothed energy without moving the contour
        if record_every > 0 && step % record_every == 0 {
            trace.push(energy_of(out.phi(), &u, w, h, params).total());
        }
        if params.reinit_every > 0 && step % params.reinit_every == 0 && step < params.iterations {
            if band.is_finite() {
                // far values only feed the region means, where staleness
                // beyond twice the band barely registers
                for i in redistance_capped(&mut out, 2.0 * band) {
                    hv[i] = heaviside(out.phi()[i], eps);
                }
            } else {
                redistance(&mut out);
                for (hh, &p) in hv.iter_mut().zip(out.phi()) {
                    *hh = heaviside(p, eps);
                }
            }
            // also clears accumulated rounding
            sums = RegionSums::new(out.phi(), &hv, &u);
        }
    }
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{extract_contour, initialize_levelset};
    use crate::geometry::Point;

    fn disk_frame() -> Frame {
        Frame::from_fn(64, 64, |x, y| {
            if (x as f64 - 32.0).hypot(y as f64 - 32.0) <= 15.0 {
                200
            } else {
                30
            }
        })
    }

    fn binary_phi(frame: &Frame, flip: bool) -> LevelSetField {
        let phi = frame
            .pixels()
            .iter()
            .map(|&v| if (v > 100) != flip { 100.0 } else { -100.0 })
            .collect();
        LevelSetField::new(frame.width(), frame.height(), phi).unwrap()
    }

    #[test]
    fn uniform_frame_means() {
        let frame = Frame::filled(16, 16, 100);
        let f = LevelSetField::from_fn(16, 16, |x, _| x - 8.0);
        let (c1, c2) = region_means(&f, &frame).unwrap();
        assert!((c1 - 100.0).abs() < 1e-9 && (c2 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn binary_means_and_swap() {
        let frame = disk_frame();
        let (c1, c2) = region_means(&binary_phi(&frame, false), &frame).unwrap();
        assert!((c1 - 200.0).abs() < 5.0 && (c2 - 30.0).abs() < 5.0, "{c1} {c2}");
        let (d1, d2) = region_means(&binary_phi(&frame, true), &frame).unwrap();
        assert!((d1 - c2).abs() < 1e-9 && (d2 - c1).abs() < 1e-9);
    }

    #[test]
    fn empty_region_gives_global_mean() {
        let frame = disk_frame();
        let mean = frame.pixels().iter().map(|&v| v as f64).sum::<f64>() / (64.0 * 64.0);
        let all_in = LevelSetField::from_fn(64, 64, |_, _| 3.0);
        let (c1, c2) = region_means(&all_in, &frame).unwrap();
        assert!((c1 - mean).abs() < 1e-9 && (c2 - mean).abs() < 1e-9);
    }

    #[test]
    fn negative_field_on_uniform_frame_has_zero_energy() {
        let frame = Frame::filled(16, 16, 77);
        let f = LevelSetField::from_fn(16, 16, |_, _| -5.0);
        assert_eq!(total_energy(&f, &frame, &ChanVeseParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn inside_term_is_linear_in_lambda1() {
        let frame = disk_frame();
        let f = LevelSetField::from_fn(64, 64, |x, y| 10.0 - (x - 30.0).hypot(y - 30.0));
        let p = ChanVeseParams::default();
        let q = ChanVeseParams { lambda1: 2.0, ..p.clone() };
        let a = energy_terms(&f, &frame, &p).unwrap();
        let b = energy_terms(&f, &frame, &q).unwrap();
        assert!(a.inside > 0.0);
        assert_eq!(b.inside, 2.0 * a.inside);
        assert_eq!(b.outside, a.outside);
    }

    #[test]
    fn uniform_frame_shrinks() {
        let frame = Frame::filled(40, 40, 120);
        let init = LevelSetField::from_fn(40, 40, |x, y| 12.0 - (x - 20.0).hypot(y - 20.0));
        let params = ChanVeseParams { iterations: 60, ..Default::default() };
        let out = evolve(&init, &frame, &params).unwrap();
        assert!(out.inside_count() <= init.inside_count());
    }

    #[test]
    fn grows_to_disk_edge() {
        let frame = disk_frame();
        let poly: Vec<Point> = (0..64)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 64.0;
                Point::new(32.0 + 6.0 * a.cos(), 32.0 + 6.0 * a.sin())
            })
            .collect();
        let init = initialize_levelset(&poly, 64, 64).unwrap();
        let params = ChanVeseParams { iterations: 150, ..Default::default() };
        let out = evolve(&init, &frame, &params).unwrap();
        let c = extract_contour(&out).unwrap();
        for p in &c {
            let r = (p.x - 32.0).hypot(p.y - 32.0);
            assert!((r - 15.0).abs() < 1.5, "r = {r}");
        }
    }

    #[test]
    fn touching_the_border_is_fine() {
        let frame = disk_frame();
        let init = LevelSetField::from_fn(64, 64, |x, _| 4.0 - x);
        let params = ChanVeseParams { iterations: 20, ..Default::default() };
        assert!(evolve(&init, &frame, &params).is_ok());
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = ChanVeseParams { lambda1: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ChanVeseParams { iterations: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
