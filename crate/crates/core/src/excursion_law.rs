//! Laws of the ranked excursion heights `M_1(t) ≥ M_2(t) ≥ …` of skew
//! Brownian motion started at 0, the negative-binomial transfer between two
//! skewness parameters, and binomial-moment inversion.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{phi_c, SeriesControl, SeriesResult};
use crate::sum::CompensatedSum;

/// Condition number above which an alternating sum is reported as failed.
pub const MAX_CONDITION: f64 = 1e8;

/// Probability that an excursion is assigned a positive sign; strictly inside (0, 1).
///
/// The complement `1 − α` is stored alongside so that mirroring twice is the
/// identity. Parsing from a decimal string computes the complement in decimal,
/// so `"0.3"` and `"0.7"` are exact mirrors of each other.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SkewParam {
    alpha: f64,
    complement: f64,
}

impl SkewParam {
    pub const HALF: SkewParam = SkewParam {
        alpha: 0.5,
        complement: 0.5,
    };

    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_complement(alpha, 1.0 - alpha)
    }

    fn with_complement(alpha: f64, complement: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(SkewParam { alpha, complement })
        } else {
            Err(Error::domain("SkewParam", format!("alpha must lie strictly inside (0, 1), got {alpha}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.alpha
    }

    /// The parameter of the reflected process `−B^{(α)}`.
    pub fn mirror(self) -> Self {
        SkewParam {
            alpha: self.complement,
            complement: self.alpha,
        }
    }
}

/// `1 − 0.d₁…dₙ` computed on the digits, e.g. `"0.25"` → `"0.75"`.
fn decimal_complement(s: &str) -> Option<String> {
    let frac = s.trim().strip_prefix("0.")?;
    if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: u64 = frac.parse().ok()?;
    let scale = 10u64.pow(frac.len() as u32);
    if digits == 0 {
        return None;
    }
    Some(format!("0.{:0width$}", scale - digits, width = frac.len()))
}

impl FromStr for SkewParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alpha: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::domain("SkewParam", format!("cannot parse {s:?} as a number")))?;
        let complement = decimal_complement(s)
            .and_then(|c| c.parse::<f64>().ok())
            .unwrap_or(1.0 - alpha);
        Self::with_complement(alpha, complement)
    }
}

impl Serialize for SkewParam {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.alpha)
    }
}

impl fmt::Display for SkewParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedHeightQuery {
    /// Rank, 1 for the highest excursion.
    pub j: usize,
    pub y: f64,
    pub t: f64,
}

impl RankedHeightQuery {
    pub fn new(j: usize, y: f64, t: f64) -> Result<Self> {
        if j < 1 {
            return Err(Error::domain("RankedHeightQuery", "rank j must be at least 1"));
        }
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::domain("RankedHeightQuery", format!("level must be finite and non-negative, got {y}")));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain("RankedHeightQuery", format!("time must be positive, got {t}")));
        }
        Ok(Self { j, y, t })
    }
}

/// `P₀(M_j^{(1/2)}(t) > y) = 2(1 − Φ((2j−1)y/√t))`.
pub fn csaki_tail(j: usize, y: f64, t: f64) -> Result<f64> {
    let q = RankedHeightQuery::new(j, y, t)?;
    Ok(csaki(q))
}

fn csaki(q: RankedHeightQuery) -> f64 {
    2.0 * phi_c((2 * q.j - 1) as f64 * q.y / q.t.sqrt())
}

/// `ln C(h, j−1) − ln C(h−1, j−1)` for `h ≥ j`.
#[inline]
fn log_binomial_step(h: usize, j: usize) -> f64 {
    (h as f64 / (h + 1 - j) as f64).ln()
}

/// `P₀(M_j^{(α)}(t) > y) = Σ_{h≥j} 2 C(h−1, j−1) (1−2α)^{h−j} (2α)^j (1 − Φ((2h−1)y/√t))`.
pub fn ranked_height_tail(alpha: SkewParam, q: RankedHeightQuery, ctrl: SeriesControl) -> Result<SeriesResult> {
    if q.y == 0.0 {
        return Ok(SeriesResult {
            value: 1.0,
            terms_used: 0,
            tail_bound: 0.0,
        });
    }
    let a = alpha.value();
    let ratio = 1.0 - 2.0 * a;
    if ratio == 0.0 {
        return Ok(SeriesResult {
            value: csaki(q),
            terms_used: 1,
            tail_bound: 0.0,
        });
    }
    let log_ratio = ratio.abs().ln();
    let alternating = ratio < 0.0;
    let scale = q.y / q.t.sqrt();
    let sf = |h: usize| phi_c((2 * h - 1) as f64 * scale);

    let mut log_weight = std::f64::consts::LN_2 + q.j as f64 * (2.0 * a).ln();
    let mut acc = CompensatedSum::new();
    let mut h = q.j;
    // a term whose log is L carries a relative error of a few ε·|L|: the
    // normal tail amplifies argument rounding by z² ≈ 2|ln Φc| and exp adds |L|
    let mut log_scale = 1.0f64;
    loop {
        let sign = if alternating && (h - q.j) % 2 == 1 { -1.0 } else { 1.0 };
        let log_term = log_weight + sf(h).ln();
        log_scale = log_scale.max(log_term.abs());
        acc.add(sign * log_term.exp());

        log_weight += log_binomial_step(h, q.j) + log_ratio;
        // |w_{m+1}|/|w_m| = |1−2α|·m/(m−j+1) decreases in m
        let rho = ratio.abs() * (h + 1) as f64 / (h + 2 - q.j) as f64;
        let tail = if rho < 1.0 {
            (log_weight + sf(h + 1).ln()).exp() / (1.0 - rho)
        } else {
            f64::INFINITY
        };
        if tail < ctrl.abs_tol {
            let terms = h - q.j + 1;
            let mut tail_bound = tail;
            if alternating {
                let condition = acc.condition();
                if condition > MAX_CONDITION {
                    return Err(Error::Cancellation {
                        series: "ranked_height_tail",
                        condition,
                        limit: MAX_CONDITION,
                    });
                }
                tail_bound *= condition;
            }
            return Ok(SeriesResult {
                value: acc.value().clamp(0.0, 1.0),
                terms_used: terms,
                tail_bound: tail_bound + acc.rounding_bound() + 4.0 * f64::EPSILON * log_scale * acc.abs_sum(),
            });
        }
        if h - q.j + 1 >= ctrl.max_terms {
            return Err(Error::Convergence {
                series: "ranked_height_tail",
                terms: h - q.j + 1,
                partial: acc.value(),
                tail_bound: tail,
            });
        }
        h += 1;
    }
}

/// `ln` of a bound on `P₀(M_h^{(β)}(t) > y)` valid for every β: reaching `h`
/// excursions of height `y` takes `2h−1` crossings of a band of width `y`,
/// and a Chernoff bound on that crossing time gives `2^h exp(−((2h−1)y)²/2t)`.
fn log_height_tail_bound(h: usize, y: f64, t: f64) -> f64 {
    let l = (2 * h - 1) as f64 * y;
    h as f64 * std::f64::consts::LN_2 - l * l / (2.0 * t)
}

/// The α-law of the `j`-th ranked height expressed through β-laws:
/// `Σ_{h≥j} C(h−1, j−1) (1−α/β)^{h−j} (α/β)^j P₀(M_h^{(β)}(t) > y)`.
///
/// Requires `y > 0`. When α > β the ratio `|1 − α/β|` may exceed 1 and the
/// series converges only through the Gaussian decay of the β tails in `h`.
pub fn transfer_tail(
    alpha: SkewParam,
    beta: SkewParam,
    j: usize,
    y: f64,
    t: f64,
    ctrl: SeriesControl,
) -> Result<SeriesResult> {
    let q = RankedHeightQuery::new(j, y, t)?;
    if !(y > 0.0) {
        return Err(Error::domain("transfer_tail", "level must be strictly positive"));
    }
    let p = alpha.value() / beta.value();
    let ratio = 1.0 - p;
    if ratio == 0.0 {
        return ranked_height_tail(beta, q, ctrl);
    }
    let log_ratio = ratio.abs().ln();
    let alternating = ratio < 0.0;

    let mut log_weight = j as f64 * p.ln();
    let mut acc = CompensatedSum::new();
    let mut inner_error = 0.0;
    let mut h = j;
    loop {
        let weight = log_weight.exp();
        // split the tolerance so the inner errors sum to at most abs_tol
        let budget = ctrl.abs_tol * 0.5f64.powi((h - j + 1).min(1000) as i32) / weight.max(1.0);
        let inner = ranked_height_tail(beta, RankedHeightQuery { j: h, ..q }, ctrl.with_tol(budget))?;
        let sign = if alternating && (h - j) % 2 == 1 { -1.0 } else { 1.0 };
        acc.add(sign * weight * inner.value);
        inner_error += weight * inner.tail_bound;

        log_weight += log_binomial_step(h, j) + log_ratio;
        let m = h + 1;
        let rho = ratio.abs() * m as f64 / (m + 1 - j) as f64 * 2.0 * (-4.0 * m as f64 * y * y / t).exp();
        let tail = if rho < 1.0 {
            (log_weight + log_height_tail_bound(m, y, t)).exp() / (1.0 - rho)
        } else {
            f64::INFINITY
        };
        if tail < ctrl.abs_tol {
            let condition = acc.condition();
            if alternating && condition > MAX_CONDITION {
                return Err(Error::Cancellation {
                    series: "transfer_tail",
                    condition,
                    limit: MAX_CONDITION,
                });
            }
            return Ok(SeriesResult {
                value: acc.value().clamp(0.0, 1.0),
                terms_used: h - j + 1,
                tail_bound: tail * condition + inner_error + acc.rounding_bound(),
            });
        }
        if h - j + 1 >= ctrl.max_terms {
            return Err(Error::Convergence {
                series: "transfer_tail",
                terms: h - j + 1,
                partial: acc.value(),
                tail_bound: tail,
            });
        }
        h += 1;
    }
}

/// Adds `c·b` to `acc` exactly (product error recovered with an FMA).
#[inline]
fn add_product(acc: &mut CompensatedSum, c: f64, b: f64) {
    let p = c * b;
    let e = c.mul_add(b, -p);
    acc.add(p);
    acc.add(e);
}

/// Binomial moments `b_k = Σ_{m≥k} C(m, k) a_m` of a finite sequence.
pub fn binomial_moment_forward(a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|k| {
            let mut acc = CompensatedSum::new();
            let mut c = 1.0; // C(k, k)
            for (m, &am) in a.iter().enumerate().skip(k) {
                if m > k {
                    c = c * m as f64 / (m - k) as f64;
                }
                add_product(&mut acc, c, am);
            }
            acc.value()
        })
        .collect()
}

/// Recovers `a_0 … a_{m_max}` from binomial moments `b_0 … b_{K−1}` through
/// `a_m = Σ_k (−1)^{k−m} C(k, m) b_k`, truncated at `K`.
///
/// The truncation error depends on how fast `b_k` decays and is the caller's
/// concern. The alternating sums are conditioned roughly like
/// `max_k C(k, m)|b_k| / |a_m|`, so sequences that decay no faster than
/// `2^{−m}` lose digits quickly as `K` grows.
pub fn binomial_moment_invert(b: &[f64], m_max: usize) -> Result<Vec<f64>> {
    if m_max >= b.len() {
        return Err(Error::domain(
            "binomial_moment_invert",
            format!("m_max = {m_max} must be below the sequence length {}", b.len()),
        ));
    }
    Ok((0..=m_max)
        .map(|m| {
            let mut acc = CompensatedSum::new();
            let mut c = 1.0; // C(m, m)
            for (k, &bk) in b.iter().enumerate().skip(m) {
                if k > m {
                    c = c * k as f64 / (k - m) as f64;
                }
                let signed = if (k - m) % 2 == 0 { c } else { -c };
                add_product(&mut acc, signed, bk);
            }
            acc.value()
        })
        .collect())
}
