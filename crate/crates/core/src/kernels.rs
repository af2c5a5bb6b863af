//! Scalar special functions and the series kernels that the passage-time and
//! excursion-height laws are assembled from.
//!
//! Every infinite series here is truncated by a rigorous tail bound rather
//! than by watching the size of the last term, and reports that bound back in
//! a [`SeriesResult`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::excursion_law::SkewParam;
use crate::sum::CompensatedSum;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Truncation policy shared by every infinite series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesControl {
    pub abs_tol: f64,
    pub max_terms: usize,
}

impl SeriesControl {
    pub fn new(abs_tol: f64, max_terms: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::domain("SeriesControl", format!("abs_tol must be positive, got {abs_tol}")));
        }
        if max_terms == 0 {
            return Err(Error::domain("SeriesControl", "max_terms must be at least 1"));
        }
        Ok(Self { abs_tol, max_terms })
    }

    /// Same term budget with a different tolerance. The tolerance is floored at
    /// the smallest normal double so it stays positive.
    pub(crate) fn with_tol(self, abs_tol: f64) -> Self {
        Self {
            abs_tol: abs_tol.max(f64::MIN_POSITIVE),
            ..self
        }
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_terms: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: usize,
    /// Upper bound on the truncation error (inflated by the cancellation
    /// estimate for alternating series).
    pub tail_bound: f64,
}

fn check_finite(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} must be finite, got {v}")))
    }
}

/// Standard normal distribution function Φ(z).
pub fn normal_cdf(z: f64) -> Result<f64> {
    check_finite("normal_cdf", "z", z)?;
    Ok(phi(z))
}

/// Upper tail 1 − Φ(z), computed without cancellation for large z.
pub fn normal_sf(z: f64) -> Result<f64> {
    check_finite("normal_sf", "z", z)?;
    Ok(phi_c(z))
}

#[inline]
pub(crate) fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn phi_c(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Hitting density of Brownian motion at distance `d > 0`, evaluated in log
/// space so that `t → 0⁺` underflows cleanly to zero instead of `∞·0`.
#[inline]
pub(crate) fn hitting_density(d: f64, t: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let log = -d * d / (2.0 * t) - 1.5 * t.ln();
    d * FRAC_1_SQRT_2PI * log.exp()
}

/// P(T_d ≤ t) for Brownian motion at distance `d ≥ 0`.
#[inline]
pub(crate) fn hitting_cdf(d: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    libm::erfc(d / (2.0 * t).sqrt())
}

fn check_bm_args(op: &'static str, x: f64, y: f64) -> Result<()> {
    check_finite(op, "x", x)?;
    check_finite(op, "y", y)?;
    if x == y {
        return Err(Error::domain(op, "x = y: the hitting time is identically zero"));
    }
    Ok(())
}

/// First passage density of standard Brownian motion from `x` to `y`.
pub fn bm_fpt_density(x: f64, y: f64, t: f64) -> Result<f64> {
    check_bm_args("bm_fpt_density", x, y)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("bm_fpt_density", format!("t must be positive, got {t}")));
    }
    Ok(hitting_density((y - x).abs(), t))
}

/// P(T_y ≤ t) for standard Brownian motion started at `x`.
pub fn bm_fpt_cdf(x: f64, y: f64, t: f64) -> Result<f64> {
    check_bm_args("bm_fpt_cdf", x, y)?;
    if !(t >= 0.0) {
        return Err(Error::domain("bm_fpt_cdf", format!("t must be non-negative, got {t}")));
    }
    Ok(hitting_cdf((y - x).abs(), t))
}

fn check_g_args(op: &'static str, x: f64, y: f64, t: f64, allow_zero_t: bool) -> Result<()> {
    check_finite(op, "x", x)?;
    check_finite(op, "y", y)?;
    if !(y > 0.0) {
        return Err(Error::domain(op, format!("target level must be positive, got {y}")));
    }
    if !(x < y) {
        return Err(Error::domain(op, format!("start {x} must lie below the target {y}")));
    }
    let t_ok = if allow_zero_t { t >= 0.0 } else { t > 0.0 };
    if !t_ok || t.is_nan() {
        return Err(Error::domain(op, format!("invalid time {t}")));
    }
    Ok(())
}

/// Geometric mixture `Σ_j 2α(1−2α)^{j−1} K((2j−1)y − x)` of a kernel `K`
/// that is non-increasing in distance beyond `monotone_from`.
fn geometric_mixture(
    series: &'static str,
    alpha: SkewParam,
    x: f64,
    y: f64,
    ctrl: SeriesControl,
    monotone_from: f64,
    kernel: impl Fn(f64) -> f64,
) -> Result<SeriesResult> {
    let a = alpha.value();
    let ratio = 1.0 - 2.0 * a;
    let abs_ratio = ratio.abs();
    let mut weight = 2.0 * a;
    let mut acc = CompensatedSum::new();
    let mut j = 1usize;
    loop {
        let dist = (2 * j - 1) as f64 * y - x;
        acc.add(weight * kernel(dist));
        weight *= ratio;

        let next = dist + 2.0 * y;
        let tail = if weight == 0.0 {
            0.0
        } else if next >= monotone_from {
            weight.abs() * kernel(next) / (1.0 - abs_ratio)
        } else {
            f64::INFINITY
        };
        if tail < ctrl.abs_tol {
            let tail_bound = if ratio < 0.0 { tail * acc.condition() } else { tail };
            return Ok(SeriesResult {
                value: acc.value(),
                terms_used: j,
                tail_bound: tail_bound + acc.rounding_bound(),
            });
        }
        if j >= ctrl.max_terms {
            return Err(Error::Convergence {
                series,
                terms: j,
                partial: acc.value(),
                tail_bound: tail,
            });
        }
        j += 1;
    }
}

/// `g_{x,y}^{(α)}(t) = 2α Σ_j (1−2α)^{j−1} f(x, (2j−1)y, t)`.
///
/// For `x ≤ 0 < y` this is the passage density of skew Brownian motion from
/// `x` to `y`. Terms alternate in sign when α > 1/2.
pub fn g_series(alpha: SkewParam, x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_g_args("g_series", x, y, t, false)?;
    // d·exp(−d²/2t) decreases once d ≥ √t
    geometric_mixture("g_series", alpha, x, y, ctrl, t.sqrt(), |d| hitting_density(d, t))
}

/// Time integral of [`g_series`] over `[0, t]`:
/// `2α Σ_j (1−2α)^{j−1} P_x(T_{(2j−1)y} ≤ t)`.
pub fn g_series_cdf(alpha: SkewParam, x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_g_args("g_series_cdf", x, y, t, true)?;
    if t == 0.0 {
        return Ok(SeriesResult {
            value: 0.0,
            terms_used: 0,
            tail_bound: 0.0,
        });
    }
    geometric_mixture("g_series_cdf", alpha, x, y, ctrl, 0.0, |d| hitting_cdf(d, t))
}

fn check_theta_args(op: &'static str, x: f64, y: f64, t: f64) -> Result<()> {
    check_finite(op, "x", x)?;
    check_finite(op, "y", y)?;
    if !(0.0 < x && x < y) {
        return Err(Error::domain(op, format!("need 0 < x < y, got x = {x}, y = {y}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(op, format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// Density of the time at which Brownian motion started at `x ∈ (0, y)`
/// reaches `y` before reaching 0:
/// `h_{x,y}(t) = (π/y²) Σ_n n exp(−π²n²t/2y²) sin(π(y−x)n/y)`.
///
/// Uses the spectral series for `t ≥ y²` and the equivalent image sum below
/// that, where the spectral series would need `O(y/√t)` terms.
pub fn theta_hitting_density(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_theta_args("theta_hitting_density", x, y, t)?;
    if t < y * y {
        theta_images(x, y, t, ctrl)
    } else {
        theta_spectral(x, y, t, ctrl)
    }
}

/// Spectral (eigenfunction) form of [`theta_hitting_density`].
pub fn theta_hitting_density_spectral(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_theta_args("theta_hitting_density_spectral", x, y, t)?;
    theta_spectral(x, y, t, ctrl)
}

/// Image (reflection) form of [`theta_hitting_density`]:
/// `Σ_{k∈ℤ} d_k/(√(2π) t^{3/2}) exp(−d_k²/2t)` with `d_k = (2k+1)y − x`.
pub fn theta_hitting_density_images(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_theta_args("theta_hitting_density_images", x, y, t)?;
    theta_images(x, y, t, ctrl)
}

fn clamp_density(series: &'static str, acc: CompensatedSum, terms: usize, tail: f64) -> Result<SeriesResult> {
    let value = acc.value();
    let slack = tail + acc.rounding_bound();
    if value >= 0.0 {
        return Ok(SeriesResult {
            value,
            terms_used: terms,
            tail_bound: slack,
        });
    }
    if -value <= slack {
        return Ok(SeriesResult {
            value: 0.0,
            terms_used: terms,
            tail_bound: slack,
        });
    }
    Err(Error::Convergence {
        series,
        terms,
        partial: value,
        tail_bound: slack,
    })
}

fn theta_spectral(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    let prefactor = PI / (y * y);
    let c = PI * PI * t / (2.0 * y * y);
    let angle = PI * (y - x) / y;
    // n·exp(−cn²) is decreasing for n ≥ 1/√(2c)
    let monotone_from = (2.0 * c).sqrt().recip();
    let mut acc = CompensatedSum::new();
    let mut n = 1usize;
    loop {
        let nf = n as f64;
        acc.add(prefactor * nf * (-c * nf * nf).exp() * (nf * angle).sin());
        if nf >= monotone_from {
            let tail = prefactor * (-c * nf * nf).exp() / (2.0 * c);
            if tail < ctrl.abs_tol {
                return clamp_density("theta_hitting_density", acc, n, tail);
            }
        }
        if n >= ctrl.max_terms {
            let tail = prefactor * (-c * nf * nf).exp() / (2.0 * c);
            return Err(Error::Convergence {
                series: "theta_hitting_density",
                terms: n,
                partial: acc.value(),
                tail_bound: tail,
            });
        }
        n += 1;
    }
}

/// Bound on `Σ_{m≥0} K(d + 2ym)` for a kernel non-increasing beyond `d`,
/// given `K(d)` and `∫_d^∞ K`.
fn image_side_tail(y: f64, kernel_at: f64, integral_from: f64) -> f64 {
    kernel_at + integral_from / (2.0 * y)
}

fn theta_images(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    let sqrt_t = t.sqrt();
    let mut acc = CompensatedSum::new();
    acc.add(hitting_density(y - x, t));
    let mut k = 0usize;
    loop {
        // next unused distances on each side
        let up = (2 * k + 3) as f64 * y - x;
        let down = (2 * k + 1) as f64 * y + x;
        let tail = if up >= sqrt_t && down >= sqrt_t {
            let gauss = |d: f64| (-d * d / (2.0 * t)).exp() * FRAC_1_SQRT_2PI / sqrt_t;
            image_side_tail(y, hitting_density(up, t), gauss(up))
                + image_side_tail(y, hitting_density(down, t), gauss(down))
        } else {
            f64::INFINITY
        };
        let terms = 2 * k + 1;
        if tail < ctrl.abs_tol {
            return clamp_density("theta_hitting_density", acc, terms, tail);
        }
        if terms >= ctrl.max_terms {
            return Err(Error::Convergence {
                series: "theta_hitting_density",
                terms,
                partial: acc.value(),
                tail_bound: tail,
            });
        }
        acc.add(hitting_density(up, t));
        acc.add(-hitting_density(down, t));
        k += 1;
    }
}

/// `∫₀ᵗ h_{x,y}(s) ds`: probability that Brownian motion from `x ∈ (0, y)`
/// reaches `y` before 0 and does so by time `t`.
pub fn theta_hitting_cdf(x: f64, y: f64, t: f64, ctrl: SeriesControl) -> Result<SeriesResult> {
    check_finite("theta_hitting_cdf", "x", x)?;
    check_finite("theta_hitting_cdf", "y", y)?;
    if !(0.0 < x && x < y) {
        return Err(Error::domain("theta_hitting_cdf", format!("need 0 < x < y, got x = {x}, y = {y}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("theta_hitting_cdf", format!("t must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(SeriesResult {
            value: 0.0,
            terms_used: 0,
            tail_bound: 0.0,
        });
    }
    let sqrt_t = t.sqrt();
    let result = if t < y * y {
        let mut acc = CompensatedSum::new();
        acc.add(hitting_cdf(y - x, t));
        let mut k = 0usize;
        loop {
            let up = (2 * k + 3) as f64 * y - x;
            let down = (2 * k + 1) as f64 * y + x;
            let side = |d: f64| {
                let z = d / sqrt_t;
                // ∫_d^∞ 2Q(u/√t) du ≤ 2√t φ(z)/z² for z ≥ 1
                let integral = if z >= 1.0 {
                    2.0 * sqrt_t * FRAC_1_SQRT_2PI * (-z * z / 2.0).exp() / (z * z)
                } else {
                    f64::INFINITY
                };
                image_side_tail(y, hitting_cdf(d, t), integral)
            };
            let tail = side(up) + side(down);
            let terms = 2 * k + 1;
            if tail < ctrl.abs_tol {
                break SeriesResult {
                    value: acc.value(),
                    terms_used: terms,
                    tail_bound: tail + acc.rounding_bound(),
                };
            }
            if terms >= ctrl.max_terms {
                return Err(Error::Convergence {
                    series: "theta_hitting_cdf",
                    terms,
                    partial: acc.value(),
                    tail_bound: tail,
                });
            }
            acc.add(hitting_cdf(up, t));
            acc.add(-hitting_cdf(down, t));
            k += 1;
        }
    } else {
        let c = PI * PI * t / (2.0 * y * y);
        let angle = PI * (y - x) / y;
        let mut acc = CompensatedSum::new();
        acc.add(x / y);
        let mut n = 1usize;
        loop {
            let nf = n as f64;
            acc.add(-2.0 / (PI * nf) * (nf * angle).sin() * (-c * nf * nf).exp());
            let m = nf + 1.0;
            let tail = 2.0 / (PI * m) * (-c * m * m).exp() / (1.0 - (-c * (2.0 * m + 1.0)).exp());
            if tail < ctrl.abs_tol {
                break SeriesResult {
                    value: acc.value(),
                    terms_used: n,
                    tail_bound: tail + acc.rounding_bound(),
                };
            }
            if n >= ctrl.max_terms {
                return Err(Error::Convergence {
                    series: "theta_hitting_cdf",
                    terms: n,
                    partial: acc.value(),
                    tail_bound: tail,
                });
            }
            n += 1;
        }
    };
    Ok(SeriesResult {
        value: result.value.clamp(0.0, x / y),
        ..result
    })
}

/// Density at `t` of the exponential law with rate `λ(n, y) = π²n²/(2y²)`.
pub fn exp_kernel_density(n: u64, y: f64, t: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain("exp_kernel_density", "n must be at least 1"));
    }
    if y == 0.0 || !y.is_finite() {
        return Err(Error::domain("exp_kernel_density", format!("y must be finite and non-zero, got {y}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("exp_kernel_density", format!("t must be non-negative, got {t}")));
    }
    let nf = n as f64;
    let rate = PI * PI * nf * nf / (2.0 * y * y);
    Ok(rate * (-rate * t).exp())
}
