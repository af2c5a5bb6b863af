//! Density and distribution function of the first passage time
//! `T_y = inf{s ≥ 0 : B_s = y}` of skew Brownian motion started at `x`.
//!
//! Targets below zero are handled by reflecting the whole picture, which
//! swaps α and 1−α. For positive targets there are three regimes:
//!
//! * `x ≤ 0`: the path must cross the origin, and the law is a geometric
//!   mixture of Brownian passage laws ([`g_series`]).
//! * `x > y`: the path reaches `y` before it can feel the skewed origin, so
//!   the law is Brownian.
//! * `0 < x < y`: either the path reaches `y` before 0 (the theta kernel), or
//!   it hits 0 first and then behaves as a path started at the origin. The
//!   second part is a convolution, evaluated by adaptive quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::excursion_law::{ranked_height_tail, RankedHeightQuery, SkewParam};
use crate::kernels::{
    bm_fpt_cdf, bm_fpt_density, g_series, g_series_cdf, theta_hitting_cdf, theta_hitting_density, SeriesControl,
    SeriesResult,
};
use crate::quadrature::try_integrate_adaptive;

pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Integrand evaluations allowed per convolution.
const MAX_EVALS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstPassageQuery {
    pub alpha: SkewParam,
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl FirstPassageQuery {
    /// `t = 0` is accepted so that distribution functions can be evaluated
    /// there; densities require `t > 0`.
    pub fn new(alpha: SkewParam, x: f64, y: f64, t: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::domain("FirstPassageQuery", format!("x and y must be finite, got x = {x}, y = {y}")));
        }
        if x == y {
            return Err(Error::domain("FirstPassageQuery", format!("start and target coincide at {x}")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain("FirstPassageQuery", format!("t must be finite and non-negative, got {t}")));
        }
        Ok(Self { alpha, x, y, t })
    }

    pub fn at(self, t: f64) -> Result<Self> {
        Self::new(self.alpha, self.x, self.y, t)
    }

    /// The same passage seen through `B ↦ −B`.
    pub fn mirrored(self) -> Self {
        Self {
            alpha: self.alpha.mirror(),
            x: -self.x,
            y: -self.y,
            t: self.t,
        }
    }
}

/// A value with a bound on its numerical error (series tails plus the
/// quadrature error estimate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error_bound: f64,
}

impl From<SeriesResult> for Estimate {
    fn from(r: SeriesResult) -> Self {
        Estimate {
            value: r.value,
            error_bound: r.tail_bound,
        }
    }
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate { value, error_bound: 0.0 }
    }
}

fn check_level(op: &'static str, y: f64, t: f64, allow_zero_t: bool) -> Result<()> {
    if !(y.is_finite() && y != 0.0) {
        return Err(Error::domain(op, format!("level must be finite and non-zero, got {y}")));
    }
    let t_ok = if allow_zero_t { t >= 0.0 } else { t > 0.0 };
    if !t_ok || !t.is_finite() {
        return Err(Error::domain(op, format!("invalid time {t}")));
    }
    Ok(())
}

fn check_quad_tol(op: &'static str, quad_tol: f64) -> Result<()> {
    if quad_tol > 0.0 && quad_tol.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("quadrature tolerance must be positive, got {quad_tol}")))
    }
}

/// Passage density from the origin to `y ≠ 0`.
pub fn fpt_density_from_origin(alpha: SkewParam, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_level("fpt_density_from_origin", y, t, false)?;
    if y > 0.0 {
        g_series(alpha, 0.0, y, t, ctrl)
    } else {
        g_series(alpha.mirror(), 0.0, -y, t, ctrl)
    }
}

/// `P₀(T_y ≤ t)`, which equals the probability that the highest excursion
/// on the side of `y` has exceeded `|y|` by time `t`.
pub fn fpt_cdf_from_origin(alpha: SkewParam, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_level("fpt_cdf_from_origin", y, t, true)?;
    if t == 0.0 {
        return Ok(SeriesResult {
            value: 0.0,
            terms_used: 0,
            tail_bound: 0.0,
        });
    }
    let (alpha, level) = if y > 0.0 { (alpha, y) } else { (alpha.mirror(), -y) };
    ranked_height_tail(alpha, RankedHeightQuery::new(1, level, t)?, ctrl)
}

/// `∫₀ᵗ h_{x,y}(t−s) k(s) ds` for a series-valued kernel `k`.
fn theta_convolution(
    x: f64,
    y: f64,
    t: f64,
    ctrl: SeriesControl,
    quad_tol: f64,
    kernel: impl Fn(f64) -> Result<SeriesResult>,
) -> Result<Estimate> {
    let mut series_err = 0.0f64;
    let quad = try_integrate_adaptive(
        |s| {
            let u = t - s;
            if !(s > 0.0 && u > 0.0) {
                return Ok(0.0);
            }
            let h = theta_hitting_density(x, y, u, ctrl)?;
            let k = kernel(s)?;
            let err = h.tail_bound * k.value.abs() + k.tail_bound * h.value.abs() + h.tail_bound * k.tail_bound;
            series_err = series_err.max(err);
            Ok::<f64, Error>(h.value * k.value)
        },
        0.0,
        t,
        quad_tol,
        MAX_EVALS,
    )?;
    Ok(Estimate {
        value: quad.value,
        error_bound: quad.error_estimate + t * series_err,
    })
}

/// `(g_{0,y} ∗ h_{x,y})(t)`: the resummed convolution series
/// `Σ_n (2/πn) sin(π(y−x)n/y) (g_{0,y} ∗ κ_n)(t)`, for `0 < x < y`.
pub fn correction_term(alpha: SkewParam, x: f64, y: f64, t: f64, ctrl: SeriesControl, quad_tol: f64) -> Result<Estimate> {
    check_quad_tol("correction_term", quad_tol)?;
    if !(0.0 < x && x < y && y.is_finite()) {
        return Err(Error::domain("correction_term", format!("need 0 < x < y, got x = {x}, y = {y}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("correction_term", format!("t must be positive, got {t}")));
    }
    theta_convolution(x, y, t, ctrl, quad_tol, |s| g_series(alpha, 0.0, y, s, ctrl))
}

/// Density of `T_y` under `P_x` at `t > 0`.
pub fn fpt_density(q: FirstPassageQuery, ctrl: SeriesControl, quad_tol: f64) -> Result<Estimate> {
    check_quad_tol("fpt_density", quad_tol)?;
    if !(q.t > 0.0) {
        return Err(Error::domain("fpt_density", format!("t must be positive, got {}", q.t)));
    }
    let FirstPassageQuery { alpha, x, y, t } = q;
    if y == 0.0 {
        // the skewing only acts at the origin, which is the target itself
        return Ok(Estimate::exact(bm_fpt_density(x, 0.0, t)?));
    }
    if y < 0.0 {
        return fpt_density(q.mirrored(), ctrl, quad_tol);
    }
    if x <= 0.0 {
        return Ok(g_series(alpha, x, y, t, ctrl)?.into());
    }
    if x > y {
        return Ok(Estimate::exact(bm_fpt_density(x, y, t)?));
    }
    // Either y is reached before 0 (theta kernel), or 0 is hit first and the
    // path restarts from the origin. The restart part equals
    // g_{−x,y} − h_{x,y} ∗ g_{−y,y}, whose convolution factor is smooth at s = 0.
    let direct = g_series(alpha, -x, y, t, ctrl)?;
    let theta = theta_hitting_density(x, y, t, ctrl)?;
    let conv = theta_convolution(x, y, t, ctrl, quad_tol, |s| g_series(alpha, -y, y, s, ctrl))?;
    Ok(Estimate {
        value: direct.value + theta.value - conv.value,
        error_bound: direct.tail_bound + theta.tail_bound + conv.error_bound,
    })
}

/// `P_x(T_y ≤ t)`.
pub fn fpt_cdf(q: FirstPassageQuery, ctrl: SeriesControl, quad_tol: f64) -> Result<Estimate> {
    check_quad_tol("fpt_cdf", quad_tol)?;
    let FirstPassageQuery { alpha, x, y, t } = q;
    if t == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if y == 0.0 {
        return Ok(Estimate::exact(bm_fpt_cdf(x, 0.0, t)?));
    }
    if y < 0.0 {
        return fpt_cdf(q.mirrored(), ctrl, quad_tol);
    }
    if x <= 0.0 {
        let r = g_series_cdf(alpha, x, y, t, ctrl)?;
        return Ok(Estimate {
            value: r.value.clamp(0.0, 1.0),
            error_bound: r.tail_bound,
        });
    }
    if x > y {
        return Ok(Estimate::exact(bm_fpt_cdf(x, y, t)?));
    }
    // the density decomposition integrated term by term; the convolution
    // against the distribution function is smoother than against the density
    let direct = g_series_cdf(alpha, -x, y, t, ctrl)?;
    let theta = theta_hitting_cdf(x, y, t, ctrl)?;
    let conv = theta_convolution(x, y, t, ctrl, quad_tol, |s| g_series_cdf(alpha, -y, y, s, ctrl))?;
    Ok(Estimate {
        value: (direct.value + theta.value - conv.value).clamp(0.0, 1.0),
        error_bound: direct.tail_bound + theta.tail_bound + conv.error_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Density,
    Cdf,
}

/// [`fpt_density`] or [`fpt_cdf`] tabulated on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub kind: CurveKind,
    pub alpha: SkewParam,
    pub x: f64,
    pub y: f64,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub error_bounds: Vec<f64>,
    pub series_tol: f64,
    pub quad_tol: f64,
}

/// Evaluates a curve on an ascending grid. Grid points are independent, so
/// the parallel path returns exactly what the sequential one does.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_curve(
    alpha: SkewParam,
    x: f64,
    y: f64,
    t_grid: &[f64],
    kind: CurveKind,
    ctrl: SeriesControl,
    quad_tol: f64,
    parallel: bool,
) -> Result<DensityCurve> {
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("evaluate_curve", "time grid must be strictly ascending"));
    }
    let base = FirstPassageQuery::new(alpha, x, y, 0.0)?;
    let point = |&t: &f64| -> Result<Estimate> {
        let q = base.at(t)?;
        match kind {
            CurveKind::Density => fpt_density(q, ctrl, quad_tol),
            CurveKind::Cdf => fpt_cdf(q, ctrl, quad_tol),
        }
    };
    let estimates: Vec<Estimate> = if parallel {
        t_grid.par_iter().map(point).collect::<Result<_>>()?
    } else {
        t_grid.iter().map(point).collect::<Result<_>>()?
    };
    Ok(DensityCurve {
        kind,
        alpha,
        x,
        y,
        t_grid: t_grid.to_vec(),
        values: estimates.iter().map(|e| e.value).collect(),
        error_bounds: estimates.iter().map(|e| e.error_bound).collect(),
        series_tol: ctrl.abs_tol,
        quad_tol,
    })
}

/// `n` points spaced evenly in `ln t` from `t_min` to `t_max` inclusive.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) || n < 2 {
        return Err(Error::domain("log_grid", format!("need 0 < t_min < t_max and n ≥ 2, got [{t_min}, {t_max}], n = {n}")));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let step = (b - a) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
    grid[0] = t_min;
    grid[n - 1] = t_max;
    Ok(grid)
}

/// `n` evenly spaced points from `t_min` to `t_max` inclusive.
pub fn linear_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min >= 0.0 && t_min < t_max && t_max.is_finite()) || n < 2 {
        return Err(Error::domain("linear_grid", format!("need 0 ≤ t_min < t_max and n ≥ 2, got [{t_min}, {t_max}], n = {n}")));
    }
    let step = (t_max - t_min) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| t_min + step * i as f64).collect();
    grid[n - 1] = t_max;
    Ok(grid)
}
