//! Ridge-regularized least-squares polynomial fitting.
//!
//! Both solvers minimize `||b - A c||^2 + lambda^2 ||c||^2` where `A` is the
//! Vandermonde matrix of the sample abscissae and `c` the raw monomial
//! coefficients. [`fit_polynomial`] solves the normal equations in an
//! affinely rescaled abscissa (`t = (x - mid) / half`, so `t` spans
//! `[-1, 1]`) and maps the solution back; the penalty is carried through the
//! change of basis so the minimizer is the same as in raw coordinates.
//! [`fit_polynomial_svd`] applies the spectral filter
//! `sigma_i / (sigma_i^2 + lambda^2)` to the singular triplets of the raw `A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Default regularization parameter.
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// `y = sum_k c_k x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coefficients: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Polynomial {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Polynomial::new(v)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coefficients
    }
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Validation("a polynomial needs at least one coefficient".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("polynomial coefficients must be finite".into()));
        }
        Ok(Polynomial { coefficients })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// The polynomial of `x - shift` expressed in powers of `x`, i.e. the
    /// curve translated by `shift` along its abscissa.
    pub fn shifted(&self, shift: f64) -> Polynomial {
        let n = self.coefficients.len();
        let mut out = vec![0.0; n];
        for (j, &c) in self.coefficients.iter().enumerate() {
            let mut binom = 1.0;
            for k in 0..=j {
                out[k] += c * binom * (-shift).powi((j - k) as i32);
                binom = binom * (j - k) as f64 / (k + 1) as f64;
            }
        }
        Polynomial { coefficients: out }
    }

    /// `Q(x) = P((x - shift) / scale)` in powers of `x`.
    pub fn compose_affine(&self, scale: f64, shift: f64) -> Polynomial {
        let scaled = Polynomial {
            coefficients: self
                .coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c / scale.powi(k as i32))
                .collect(),
        };
        scaled.shifted(shift)
    }

    /// Adds `offset` to every curve value.
    pub fn offset(&self, offset: f64) -> Polynomial {
        let mut coefficients = self.coefficients.clone();
        coefficients[0] += offset;
        Polynomial { coefficients }
    }
}

pub fn evaluate(poly: &Polynomial, x: f64) -> f64 {
    poly.eval(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub points: Vec<Point>,
    pub order: usize,
    pub lambda: f64,
}

impl FitProblem {
    pub fn new(points: Vec<Point>, order: usize, lambda: f64) -> Result<Self> {
        let problem = FitProblem {
            points,
            order,
            lambda,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Fit `x = P(y)`: the sample axes are swapped before fitting.
    pub fn x_of_y(points: &[Point], order: usize, lambda: f64) -> Result<Self> {
        FitProblem::new(
            points.iter().map(|p| Point::new(p.y, p.x)).collect(),
            order,
            lambda,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("fit points must be finite".into()));
        }
        let needed = if self.lambda == 0.0 { self.order + 1 } else { 1 };
        if self.points.len() < needed {
            return Err(Error::Validation(format!(
                "order {} fit with lambda {} needs at least {needed} points, got {}",
                self.order,
                self.lambda,
                self.points.len()
            )));
        }
        Ok(())
    }

    fn distinct_abscissae(&self) -> usize {
        let mut xs: Vec<f64> = self.points.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    fn check_rank(&self) -> Result<()> {
        if self.lambda == 0.0 && self.distinct_abscissae() < self.order + 1 {
            return Err(Error::Singular(format!(
                "{} distinct abscissae cannot determine an order-{} polynomial without regularization",
                self.distinct_abscissae(),
                self.order
            )));
        }
        Ok(())
    }
}

/// Upper-triangular map from coefficients in `t = (x - mid) / half` to raw
/// monomial coefficients: `c = T d`.
fn rescale_matrix(order: usize, mid: f64, half: f64) -> DMatrix<f64> {
    let n = order + 1;
    let mut t = DMatrix::zeros(n, n);
    for j in 0..n {
        let scale = half.powi(-(j as i32));
        let mut binom = 1.0;
        for k in 0..=j {
            t[(k, j)] = binom * (-mid).powi((j - k) as i32) * scale;
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
    }
    t
}

/// Regularized normal-equation solve in a rescaled abscissa.
pub fn fit_polynomial(problem: &FitProblem) -> Result<Polynomial> {
    problem.validate()?;
    problem.check_rank()?;
    let n = problem.order + 1;
    let (lo, hi) = problem
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
    let mid = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };

    let mut normal = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut powers = vec![0.0; n];
    for p in &problem.points {
        let t = (p.x - mid) / half;
        let mut v = 1.0;
        for pw in powers.iter_mut() {
            *pw = v;
            v *= t;
        }
        for i in 0..n {
            rhs[i] += powers[i] * p.y;
            for j in i..n {
                normal[(i, j)] += powers[i] * powers[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            normal[(i, j)] = normal[(j, i)];
        }
    }
    let rescale = rescale_matrix(problem.order, mid, half);
    if problem.lambda > 0.0 {
        let penalty = rescale.transpose() * &rescale;
        normal += penalty * (problem.lambda * problem.lambda);
    }
    let chol = normal.clone().cholesky().ok_or_else(|| {
        Error::Singular("normal matrix is not positive definite".into())
    })?;
    let diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d.abs()), b.max(d.abs())));
    if dmin <= dmax * 1e-7 {
        return Err(Error::Singular("normal matrix is numerically singular".into()));
    }
    let d = chol.solve(&rhs);
    let c = rescale * d;
    Polynomial::new(c.iter().copied().collect())
}

/// Spectral-filter solve `c = sum_i sigma_i / (sigma_i^2 + lambda^2) v_i u_i^T b`.
pub fn fit_polynomial_svd(problem: &FitProblem) -> Result<Polynomial> {
    problem.validate()?;
    problem.check_rank()?;
    let n = problem.order + 1;
    let m = problem.points.len();
    let a = DMatrix::from_fn(m, n, |i, j| problem.points[i].x.powi(j as i32));
    let b = DVector::from_iterator(m, problem.points.iter().map(|p| p.y));
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let cutoff = smax * f64::EPSILON * m.max(n) as f64;
    let lambda2 = problem.lambda * problem.lambda;
    let mut c = DVector::<f64>::zeros(n);
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if lambda2 == 0.0 && sigma <= cutoff {
            continue;
        }
        let filter = sigma / (sigma * sigma + lambda2);
        if filter == 0.0 {
            continue;
        }
        let proj = u.column(i).dot(&b);
        c += v_t.row(i).transpose() * (filter * proj);
    }
    Polynomial::new(c.iter().copied().collect())
}

/// Convenience: fit `x = P(y)` with the normal-equation solver.
pub fn fit_x_of_y(points: &[Point], order: usize, lambda: f64) -> Result<Polynomial> {
    fit_polynomial(&FitProblem::x_of_y(points, order, lambda)?)
}

/// Fit `x = P(y)` for an image wall, with the penalty applied in a local
/// frame: `y` rescaled to `[-1, 1]` over the points and `x` taken relative
/// to the points' mean. In raw pixel coordinates a penalty of 0.1 on the
/// monomial coefficients drags a quartic wall by several pixels; in the
/// local frame it only damps the shape. The result is mapped back exactly
/// to pixel coordinates.
pub fn fit_wall_curve(points: &[Point], order: usize, lambda: f64) -> Result<Polynomial> {
    if points.is_empty() {
        return Err(Error::Validation("wall fit needs at least one point".into()));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let mid = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let x_mean = points.iter().map(|p| p.x).sum::<f64>() / points.len() as f64;
    let local: Vec<Point> = points
        .iter()
        .map(|p| Point::new((p.y - mid) / half, p.x - x_mean))
        .collect();
    let q = fit_polynomial(&FitProblem::new(local, order, lambda)?)?;
    Ok(q.compose_affine(half, mid).offset(x_mean))
}
