//! Globally adaptive Gauss–Kronrod (7/15) integration.
//!
//! The panel with the largest error estimate is bisected until the summed
//! estimate meets the tolerance, so refinement piles up wherever the
//! integrand changes fastest. For passage-time integrands that is next to
//! the endpoints.

use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // ties broken by position so the subdivision order is deterministic
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod<E>(f: &mut impl FnMut(f64) -> std::result::Result<f64, E>, a: f64, b: f64) -> std::result::Result<Panel, E> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    let mut abs = kron.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for (jtw, &wg) in WG.iter().take(3).enumerate() {
        let j = 2 * jtw + 1;
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        gauss += wg * (f1 + f2);
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        fv1[j] = f1;
        fv2[j] = f2;
    }
    for jtwm1 in 0..4 {
        let j = 2 * jtwm1;
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        fv1[j] = f1;
        fv2[j] = f2;
    }
    let mean = kron * 0.5;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kron * half;
    let abs = abs * half.abs();
    let asc = asc * half.abs();
    let mut err = ((kron - gauss) * half).abs();
    // QUADPACK error rescaling
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    Ok(Panel { a, b, value, error: err })
}

/// `∫_a^b f` to absolute tolerance `abs_tol`, using at most `max_evals`
/// integrand evaluations. Endpoints are never evaluated, so integrable
/// endpoint singularities are fine.
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, max_evals: usize) -> Result<QuadResult> {
    try_integrate_adaptive(|x| Ok::<f64, Error>(f(x)), a, b, abs_tol, max_evals)
}

/// [`integrate_adaptive`] for integrands that can fail; the first error
/// aborts the integration and is returned unchanged.
pub fn try_integrate_adaptive<E>(
    mut f: impl FnMut(f64) -> std::result::Result<f64, E>,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_evals: usize,
) -> std::result::Result<QuadResult, E>
where
    E: From<Error>,
{
    if !(a.is_finite() && b.is_finite()) || !(a <= b) {
        return Err(Error::domain("integrate_adaptive", format!("need finite a ≤ b, got [{a}, {b}]")).into());
    }
    if !(abs_tol > 0.0) {
        return Err(Error::domain("integrate_adaptive", format!("abs_tol must be positive, got {abs_tol}")).into());
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let first = kronrod(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    let mut error = first.error;
    // panels too narrow to split further
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    heap.push(first);
    let mut splits = 0usize;

    while error > abs_tol {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) || (worst.b - worst.a) < 1e-14 * mid.abs().max(f64::MIN_POSITIVE) {
            frozen_value += worst.value;
            frozen_error += worst.error;
            continue;
        }
        if evaluations + 30 > max_evals {
            heap.push(worst);
            let (v, e) = totals(&heap, frozen_value, frozen_error);
            return Err(Error::Quadrature {
                estimate: v,
                error_estimate: e,
                evaluations,
            }
            .into());
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        evaluations += 30;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
        // running totals drift; resync occasionally
        if splits.is_multiple_of(128) {
            error = totals(&heap, frozen_value, frozen_error).1;
        }
    }
    let (value, error_estimate) = totals(&heap, frozen_value, frozen_error);
    if error_estimate > abs_tol {
        return Err(Error::Quadrature {
            estimate: value,
            error_estimate,
            evaluations,
        }
        .into());
    }
    Ok(QuadResult {
        value,
        error_estimate,
        evaluations,
    })
}

fn totals(heap: &BinaryHeap<Panel>, frozen_value: f64, frozen_error: f64) -> (f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut acc = crate::sum::CompensatedSum::new();
    acc.add(frozen_value);
    let mut err = frozen_error;
    for p in panels {
        acc.add(p.value);
        err += p.error;
    }
    (acc.value(), err)
}

/// `∫_a^∞ f` through the substitution `t = a + u/(1−u)` onto `u ∈ (0, 1)`.
pub fn integrate_semi_infinite(mut f: impl FnMut(f64) -> f64, a: f64, abs_tol: f64, max_evals: usize) -> Result<QuadResult> {
    integrate_adaptive(
        |u| {
            let w = 1.0 - u;
            f(a + u / w) / (w * w)
        },
        0.0,
        1.0,
        abs_tol,
        max_evals,
    )
}

/// `∫_a^b f` for `b ≤ ∞` mapped through `t = a + u/(1−u)`; the finite upper
/// limit becomes `u_b = (b−a)/(1+b−a)`.
pub fn integrate_mapped(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, max_evals: usize) -> Result<QuadResult> {
    let span = b - a;
    let upper = if span.is_infinite() { 1.0 } else { span / (1.0 + span) };
    integrate_adaptive(
        |u| {
            let w = 1.0 - u;
            f(a + u / w) / (w * w)
        },
        0.0,
        upper,
        abs_tol,
        max_evals,
    )
}
