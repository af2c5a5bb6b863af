//! Named validation suites that compare the analytic laws against
//! closed forms, internal identities and simulation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::excursion_law::{csaki_tail, ranked_height_tail, transfer_tail, RankedHeightQuery, SkewParam};
use crate::first_passage::{fpt_cdf, fpt_cdf_from_origin, fpt_density, fpt_density_from_origin, log_grid, FirstPassageQuery};
use crate::kernels::{bm_fpt_density, SeriesControl};
use crate::montecarlo::{
    binomial_se, chi_square_gof, coupled_sample, first_passage_sample, ks_distance, ks_two_sample,
    ranked_heights_sample, McConfig, Sampler,
};
use crate::quadrature::integrate_mapped;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Reduction,
    Mass,
    Thm3,
    McFpt,
    McHeights,
    Ordering,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::Reduction,
        Suite::Mass,
        Suite::Thm3,
        Suite::McFpt,
        Suite::McHeights,
        Suite::Ordering,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Reduction => "reduction",
            Suite::Mass => "mass",
            Suite::Thm3 => "thm3",
            Suite::McFpt => "mc-fpt",
            Suite::McHeights => "mc-heights",
            Suite::Ordering => "ordering",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| Error::domain("Suite", format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: statistic <= threshold,
            statistic,
            threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            passed: statistic >= threshold,
            statistic,
            threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub runtime_secs: f64,
}

impl RunReport {
    fn new(suite: Suite, checks: Vec<Check>, started: Instant) -> Self {
        RunReport {
            suite: suite.to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            runtime_secs: started.elapsed().as_secs_f64(),
        }
    }

    /// One line per check followed by an overall verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {}: {} (statistic {:.6e}, threshold {:.6e})\n",
                self.suite,
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.statistic,
                c.threshold
            ));
        }
        out.push_str(&format!(
            "[{}] {} in {:.2}s\n",
            self.suite,
            if self.passed { "PASS" } else { "FAIL" },
            self.runtime_secs
        ));
        out
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    pub ctrl: SeriesControl,
    pub quad_tol: f64,
    /// Skewness values for the ordering suite.
    pub ordering_alphas: Vec<SkewParam>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            seed: DEFAULT_SEED,
            ctrl: SeriesControl::default(),
            quad_tol: crate::first_passage::DEFAULT_QUAD_TOL,
            ordering_alphas: ["0.1", "0.25", "0.5", "0.75", "0.9"]
                .iter()
                .map(|s| s.parse().expect("literal skewness"))
                .collect(),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Runs one suite, or every suite in turn for [`Suite::All`].
pub fn run(suite: Suite, opts: &ValidateOptions) -> Result<Vec<RunReport>> {
    match suite {
        Suite::All => Suite::EACH.iter().map(|&s| run_one(s, opts)).collect(),
        s => Ok(vec![run_one(s, opts)?]),
    }
}

fn run_one(suite: Suite, opts: &ValidateOptions) -> Result<RunReport> {
    let started = Instant::now();
    let checks = match suite {
        Suite::Reduction => reduction(opts)?,
        Suite::Mass => mass(opts)?,
        Suite::Thm3 => thm3(opts)?,
        Suite::McFpt => mc_fpt(opts)?,
        Suite::McHeights => mc_heights(opts)?,
        Suite::Ordering => ordering(opts)?,
        Suite::All => unreachable!("expanded by run"),
    };
    Ok(RunReport::new(suite, checks, started))
}

/// `(x, y, t)` points covering every case of the passage density: start
/// below, between or beyond a positive target, the mirrored cases for a
/// negative target, and a target at the origin.
pub fn reduction_lattice() -> Vec<(f64, f64, f64)> {
    let xs = [-2.0, -0.8, -0.3, 0.0, 0.25, 0.6, 1.3, 2.2];
    let ys = [-1.5, -0.5, 0.0, 0.4, 1.0, 1.8];
    let ts = log_grid(0.02, 20.0, 11).expect("fixed grid");
    let mut points = Vec::new();
    for &x in &xs {
        for &y in &ys {
            if x == y {
                continue;
            }
            for &t in &ts {
                points.push((x, y, t));
            }
        }
    }
    points
}

fn reduction(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for (x, y, t) in reduction_lattice() {
        let q = FirstPassageQuery::new(SkewParam::HALF, x, y, t)?;
        let v = fpt_density(q, opts.ctrl, opts.quad_tol)?.value;
        worst = worst.max((v - bm_fpt_density(x, y, t)?).abs());
    }
    let mut csaki_residual = 0.0f64;
    for j in 1..=5 {
        for y in [0.0, 0.1, 0.5, 1.0, 2.0, 4.0] {
            for t in [0.1, 1.0, 10.0] {
                let v = ranked_height_tail(SkewParam::HALF, RankedHeightQuery::new(j, y, t)?, opts.ctrl)?.value;
                csaki_residual = csaki_residual.max((v - csaki_tail(j, y, t)?).abs());
            }
        }
    }
    Ok(vec![
        Check::at_most("half-skew density equals Brownian density", worst, 1e-7),
        Check::at_most("half-skew ranked heights equal the symmetric law", csaki_residual, 1e-14),
    ])
}

fn mass(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let horizon = 1e4;
    let mut checks = Vec::new();
    for a in ["0.2", "0.5", "0.8"] {
        let alpha: SkewParam = a.parse()?;
        let closed = fpt_cdf_from_origin(alpha, 1.0, horizon, opts.ctrl)?.value;
        checks.push(Check::at_least(format!("alpha {a}: mass reached by t = 1e4"), closed, 0.999));
        let quad = integrate_mapped(
            |t| {
                if t > 0.0 {
                    fpt_density_from_origin(alpha, 1.0, t, opts.ctrl).map_or(f64::NAN, |r| r.value)
                } else {
                    0.0
                }
            },
            0.0,
            horizon,
            1e-9,
            1_000_000,
        )?;
        checks.push(Check::at_most(
            format!("alpha {a}: integrated density matches distribution function"),
            (quad.value - closed).abs(),
            1e-5,
        ));
    }
    Ok(checks)
}

fn thm3(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let levels = ["0.2", "0.4", "0.6", "0.8"];
    let mut worst = 0.0f64;
    for a in levels {
        for b in levels {
            let (alpha, beta): (SkewParam, SkewParam) = (a.parse()?, b.parse()?);
            for j in 1..=3 {
                for y in [0.25, 1.0] {
                    for t in [0.5, 2.0] {
                        let direct = ranked_height_tail(alpha, RankedHeightQuery::new(j, y, t)?, opts.ctrl)?.value;
                        let via = transfer_tail(alpha, beta, j, y, t, opts.ctrl)?.value;
                        worst = worst.max((direct - via).abs());
                    }
                }
            }
        }
    }
    Ok(vec![Check::at_most("transfer between skewness parameters", worst, 1e-8)])
}

/// Analytic distribution function of `T_y` under `P_x`.
pub fn analytic_cdf(alpha: SkewParam, x: f64, y: f64, opts: &ValidateOptions) -> impl Fn(f64) -> f64 + '_ {
    move |t| {
        FirstPassageQuery::new(alpha, x, y, t)
            .and_then(|q| fpt_cdf(q, opts.ctrl, opts.quad_tol))
            .map_or(f64::NAN, |e| e.value)
    }
}

/// The first-passage queries checked against simulation.
pub const MC_QUERIES: [(&str, f64, f64); 4] = [("0.3", 0.0, 1.0), ("0.3", -1.0, 1.0), ("0.3", 0.5, 1.0), ("0.7", 1.0, -1.0)];

fn mc_fpt(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let walk = McConfig::new(Sampler::SkewWalk, 0.02, 50.0, 50_000, opts.seed)?;
    let mut checks = Vec::new();
    for (a, x, y) in MC_QUERIES {
        let alpha: SkewParam = a.parse()?;
        let sample = first_passage_sample(&walk, alpha, x, y)?;
        let ks = ks_distance(&sample, analytic_cdf(alpha, x, y, opts))?;
        checks.push(Check::at_most(format!("skew walk ({a}, {x}, {y}) restricted KS"), ks, 0.015));
    }
    let alpha: SkewParam = "0.3".parse()?;
    let flip = McConfig::new(Sampler::ExcursionFlip, 0.02 * 0.02, 50.0, 50_000, opts.seed.wrapping_add(1))?;
    let a = first_passage_sample(&walk, alpha, 0.0, 1.0)?;
    let b = first_passage_sample(&flip, alpha, 0.0, 1.0)?;
    checks.push(Check::at_most("excursion flip vs skew walk two-sample KS", ks_two_sample(&a, &b)?, 0.02));
    Ok(checks)
}

fn mc_heights(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let alpha: SkewParam = "0.3".parse()?;
    let t = 1.0;
    let cfg = McConfig::new(Sampler::ExcursionFlip, 1e-4, t, 100_000, opts.seed)?;
    let heights = ranked_heights_sample(&cfg, alpha, 3)?;
    let n = heights.len();
    let mut checks = Vec::new();
    for j in 1..=3 {
        for y in [0.25, 0.5, 1.0] {
            let exact = ranked_height_tail(alpha, RankedHeightQuery::new(j, y, t)?, opts.ctrl)?.value;
            let hits = heights.iter().filter(|h| h[j - 1] > y).count();
            let p = hits as f64 / n as f64;
            checks.push(Check::at_most(
                format!("P(M_{j} > {y}) within 3 SE + 0.01"),
                (p - exact).abs(),
                3.0 * binomial_se(exact, n) + 0.01,
            ));
        }
    }
    checks.extend(coupling_checks(opts.seed.wrapping_add(1))?);
    Ok(checks)
}

/// Cells `1..=K` and `> K` for the rank of the first accepted excursion.
const GEOMETRIC_CELLS: usize = 6;

/// Nesting of the coupled paths and the geometric law of the first accepted
/// rank. Only paths with at least [`GEOMETRIC_CELLS`] β-positive excursions
/// enter the chi-square test: acceptance coins are independent of that count,
/// so the rank capped at `K + 1` keeps its law on those paths.
pub fn coupling_checks(seed: u64) -> Result<Vec<Check>> {
    let (alpha, beta): (SkewParam, SkewParam) = ("0.3".parse()?, "0.6".parse()?);
    let cfg = McConfig::new(Sampler::ExcursionFlip, 1e-4, 1.0, 10_000, seed)?;
    let summary = coupled_sample(&cfg, alpha, beta)?;
    let q = alpha.value() / beta.value();
    let mut observed = [0u64; GEOMETRIC_CELLS + 1];
    for (first, &positives) in summary.first_accepted.iter().zip(&summary.beta_positive) {
        if positives < GEOMETRIC_CELLS {
            continue;
        }
        let cell = first.map_or(GEOMETRIC_CELLS, |k| (k - 1).min(GEOMETRIC_CELLS));
        observed[cell] += 1;
    }
    let mut probs: Vec<f64> = (0..GEOMETRIC_CELLS).map(|k| q * (1.0 - q).powi(k as i32)).collect();
    probs.push((1.0 - q).powi(GEOMETRIC_CELLS as i32));
    let chi = chi_square_gof(&observed, &probs)?;
    Ok(vec![
        Check::at_most("coupled paths nested", summary.nesting_violations as f64, 0.0),
        Check::at_least("first accepted rank is geometric (chi-square p-value)", chi.p_value, 0.01),
    ])
}

fn ordering(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let grid = log_grid(0.05, 50.0, 100)?;
    let mut checks = Vec::new();
    for &alpha in &opts.ordering_alphas {
        let mut worst = f64::NEG_INFINITY;
        let mut largest_gap = 0.0f64;
        for &t in &grid {
            let up = fpt_cdf(FirstPassageQuery::new(alpha, -1.0, 1.0, t)?, opts.ctrl, opts.quad_tol)?.value;
            let down = fpt_cdf(FirstPassageQuery::new(alpha, 1.0, -1.0, t)?, opts.ctrl, opts.quad_tol)?.value;
            // positive when the ordering expected for this α is violated
            let excess = if alpha.value() < 0.5 { up - down } else { down - up };
            worst = worst.max(excess);
            largest_gap = largest_gap.max((up - down).abs());
        }
        checks.push(if alpha.value() == 0.5 {
            Check::at_most(format!("alpha {alpha}: crossing laws coincide"), largest_gap, 1e-9)
        } else {
            Check::at_most(format!("alpha {alpha}: crossing toward the favoured side is faster"), worst, 0.0)
        });
    }
    Ok(checks)
}
