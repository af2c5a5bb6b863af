//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line.
//!
//! Run with `cargo test --test acceptance -- --test-threads=1` to get the
//! lines in order.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::process::Command;
use std::time::Instant;

use skew_fpt::excursion_law::{csaki_tail, ranked_height_tail, transfer_tail, RankedHeightQuery};
use skew_fpt::first_passage::{
    correction_term, fpt_cdf, fpt_cdf_from_origin, fpt_density, fpt_density_from_origin, log_grid, FirstPassageQuery,
    DEFAULT_QUAD_TOL,
};
use skew_fpt::kernels::{bm_fpt_density, SeriesControl};
use skew_fpt::montecarlo::{
    binomial_se, chi_square_gof, coupled_sample, first_passage_sample, ks_distance, ks_two_sample, ranked_heights_sample,
    McConfig, Sampler,
};
use skew_fpt::quadrature::integrate_mapped;
use skew_fpt::validation::DEFAULT_SEED;
use skew_fpt::SkewParam;

fn sp(a: &str) -> SkewParam {
    a.parse().unwrap()
}

fn ctrl() -> SeriesControl {
    SeriesControl::default()
}

/// Prints the verdict line (outside libtest's capture) and fails the test if needed.
fn verdict(n: u32, passed: bool, detail: String) {
    let status = if passed { "PASS" } else { "FAIL" };
    writeln!(io::stdout().lock(), "criterion {n}: {status} {detail}").unwrap();
    assert!(passed, "criterion {n}: {detail}");
}

fn cdf_of(alpha: SkewParam, x: f64, y: f64) -> impl Fn(f64) -> f64 {
    move |t| fpt_cdf(FirstPassageQuery::new(alpha, x, y, t).unwrap(), ctrl(), DEFAULT_QUAD_TOL).unwrap().value
}

#[test]
fn criterion_01_half_reduces_to_brownian() {
    let start = Instant::now();
    let xs = [-2.5, -1.0, -0.4, 0.0, 0.3, 0.7, 1.2, 2.0];
    let ys = [-1.7, -0.6, 0.0, 0.5, 1.1, 1.9];
    let ts = log_grid(0.03, 30.0, 11).unwrap();
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut branches = [false; 7];
    for &x in &xs {
        for &y in &ys {
            let branch = match () {
                _ if y == 0.0 => 6,
                _ if y > 0.0 && x <= 0.0 => 0,
                _ if y > 0.0 && x < y => 1,
                _ if y > 0.0 => 2,
                _ if x >= 0.0 => 3,
                _ if x > y => 4,
                _ => 5,
            };
            if x == y {
                continue;
            }
            branches[branch] = true;
            for &t in &ts {
                let skew = fpt_density(FirstPassageQuery::new(SkewParam::HALF, x, y, t).unwrap(), ctrl(), DEFAULT_QUAD_TOL)
                    .unwrap()
                    .value;
                worst = worst.max((skew - bm_fpt_density(x, y, t).unwrap()).abs());
                points += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = points >= 500 && branches.iter().all(|&b| b) && worst <= 1e-7 && secs <= 30.0;
    verdict(1, passed, format!("max |skew - brownian| = {worst:.3e} over {points} points (<= 1e-7), {secs:.1} s (<= 30 s)"));
}

/// `2(1 − Φ((2j−1)y/√t))` evaluated in 40-digit arithmetic, as (j, y, t, value).
const CSAKI_REFERENCE: [(usize, f64, f64, f64); 48] = [
    (1, 0.1, 0.5, 0.887537083981715),
    (1, 0.1, 2.0, 0.9436280222029834),
    (1, 0.1, 10.0, 0.9747728793699604),
    (1, 0.25, 0.5, 0.7236736098317631),
    (1, 0.25, 2.0, 0.8596837951986662),
    (1, 0.25, 10.0, 0.9369873319714807),
    (1, 1.0, 0.5, 0.15729920705028513),
    (1, 1.0, 2.0, 0.4795001221869535),
    (1, 1.0, 10.0, 0.7518296340458492),
    (1, 2.0, 0.5, 0.004677734981047266),
    (1, 2.0, 2.0, 0.15729920705028513),
    (1, 2.0, 10.0, 0.5270892568655381),
    (2, 0.1, 0.5, 0.6713732405408726),
    (2, 0.1, 2.0, 0.8320040285726364),
    (2, 0.1, 10.0, 0.9244194121866707),
    (2, 0.25, 0.5, 0.28884436634648486),
    (2, 0.25, 2.0, 0.5958830905651777),
    (2, 0.25, 10.0, 0.8125242693153686),
    (2, 1.0, 0.5, 2.209049699858544e-05),
    (2, 1.0, 2.0, 0.033894853524689274),
    (2, 1.0, 10.0, 0.3427817111479114),
    (2, 2.0, 0.5, 2.1519736712498913e-17),
    (2, 2.0, 2.0, 2.209049699858544e-05),
    (2, 2.0, 10.0, 0.057779571123597245),
    (3, 0.1, 0.5, 0.4795001221869535),
    (3, 0.1, 2.0, 0.7236736098317631),
    (3, 0.1, 10.0, 0.8743670611628919),
    (3, 0.25, 0.5, 0.07709987174354177),
    (3, 0.25, 2.0, 0.376759117811582),
    (3, 0.25, 10.0, 0.6926327840419603),
    (3, 1.0, 0.5, 1.537459794428035e-12),
    (3, 1.0, 2.0, 0.0004069520174449589),
    (3, 1.0, 10.0, 0.11384629800665805),
    (3, 2.0, 0.5, 2.088487583762545e-45),
    (3, 2.0, 2.0, 1.537459794428035e-12),
    (3, 2.0, 10.0, 0.0015654022580025497),
    (5, 0.1, 0.5, 0.20309178757716786),
    (5, 0.1, 2.0, 0.5245182802130763),
    (5, 0.1, 10.0, 0.775946788278143),
    (5, 0.25, 0.5, 0.0014627165866811518),
    (5, 0.25, 2.0, 0.11161176829829224),
    (5, 0.25, 10.0, 0.47676672399858),
    (5, 1.0, 0.5, 4.13703174651381e-37),
    (5, 1.0, 2.0, 1.9661604415428876e-10),
    (5, 1.0, 10.0, 0.004426525857919831),
    (5, 2.0, 0.5, 6.082369231816399e-143),
    (5, 2.0, 2.0, 4.13703174651381e-37),
    (5, 2.0, 10.0, 1.254864749761514e-08),
];

#[test]
fn criterion_02_half_tail_is_csaki() {
    let mut worst = 0.0f64;
    let mut structural = true;
    for (j, y, t, reference) in CSAKI_REFERENCE {
        let tail = ranked_height_tail(SkewParam::HALF, RankedHeightQuery::new(j, y, t).unwrap(), ctrl()).unwrap();
        structural &= tail.value == csaki_tail(j, y, t).unwrap() && tail.terms_used == 1;
        worst = worst.max((tail.value - reference).abs());
    }
    for j in 1..=4 {
        structural &= ranked_height_tail(SkewParam::HALF, RankedHeightQuery::new(j, 0.0, 1.0).unwrap(), ctrl()).unwrap().value == 1.0;
    }
    verdict(
        2,
        structural && worst <= 1e-14,
        format!("single closed-form term {structural}; max residual vs high-precision reference {worst:.3e} (<= 1e-14)"),
    );
}

#[test]
fn criterion_03_transfer_identity() {
    let start = Instant::now();
    let levels = ["0.2", "0.4", "0.6", "0.8"];
    let mut worst = 0.0f64;
    for a in levels {
        for b in levels {
            for j in 1..=3 {
                for y in [0.25, 1.0] {
                    for t in [0.5, 2.0] {
                        let direct = ranked_height_tail(sp(a), RankedHeightQuery::new(j, y, t).unwrap(), ctrl()).unwrap().value;
                        let via = transfer_tail(sp(a), sp(b), j, y, t, ctrl()).unwrap().value;
                        worst = worst.max((direct - via).abs());
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(3, worst <= 1e-8 && secs <= 10.0, format!("max residual {worst:.3e} (<= 1e-8), {secs:.2} s (<= 10 s)"));
}

/// The first half asks for mass 0.999 by t = 1e4, which the passage law does
/// not reach: P(T > t) decays like t^{-1/2}. This criterion fails by design.
#[test]
fn criterion_04_mass_conservation() {
    let horizon = 1e4;
    let mut lines = Vec::new();
    let mut mass_ok = true;
    let mut quad_ok = true;
    for a in ["0.2", "0.5", "0.8"] {
        let alpha = sp(a);
        let closed = fpt_cdf_from_origin(alpha, 1.0, horizon, ctrl()).unwrap().value;
        let quad = integrate_mapped(
            |t| if t > 0.0 { fpt_density_from_origin(alpha, 1.0, t, ctrl()).unwrap().value } else { 0.0 },
            0.0,
            horizon,
            1e-9,
            1_000_000,
        )
        .unwrap();
        let gap = (quad.value - closed).abs();
        mass_ok &= closed >= 0.999;
        quad_ok &= gap <= 1e-5;
        lines.push(format!("alpha {a}: mass {closed:.7} (>= 0.999), |quad - cdf| {gap:.2e} (<= 1e-5)"));
    }
    verdict(4, mass_ok && quad_ok, lines.join("; "));
}

/// Independent oracle for the convolution of the origin passage density with
/// the two-barrier hitting density: each spectral mode is integrated
/// separately, and the modes beyond the cutoff are replaced by their leading
/// asymptotics.
fn brute_correction(alpha: f64, x: f64, y: f64, t: f64, modes: usize) -> f64 {
    let g = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let ratio = 1.0 - 2.0 * alpha;
        let mut sum = 0.0;
        let mut weight = 2.0 * alpha;
        for j in 1..400 {
            let d = (2 * j - 1) as f64 * y;
            let term = weight * d / (2.0 * PI * s * s * s).sqrt() * (-d * d / (2.0 * s)).exp();
            sum += term;
            if term.abs() < 1e-300 || weight.abs() < 1e-300 {
                break;
            }
            weight *= ratio;
        }
        sum
    };
    let theta = PI * (y - x) / y;
    let mut total = 0.0;
    let mut partial_series = 0.0;
    for n in 1..=modes {
        let nf = n as f64;
        let rate = PI * PI * nf * nf / (2.0 * y * y);
        let weight = 2.0 / (PI * nf) * (nf * theta).sin();
        // the mode's kernel rate·e^{−rate·u} is spent after 40/rate
        let upper = t.min(40.0 / rate);
        let intervals = 2000;
        let h = upper / intervals as f64;
        let f = |u: f64| rate * (-rate * u).exp() * g(t - u);
        let mut simpson = f(0.0) + f(upper);
        for i in 1..intervals {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        total += weight * simpson * h / 3.0;
        partial_series += weight;
    }
    // Σ_n (2/πn) sin(nθ) = x/y, and high modes see g(t)
    total + g(t) * (x / y - partial_series)
}

#[test]
fn criterion_05_convolution_oracle() {
    let shapes = [(0.5, 1.0, 1.0), (0.2, 1.0, 0.5), (0.8, 1.5, 2.0), (0.3, 0.6, 0.3)];
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut points = 0;
    for a in ["0.2", "0.3", "0.5", "0.7", "0.9"] {
        for &(x, y, t) in &shapes {
            let fast = correction_term(sp(a), x, y, t, ctrl(), DEFAULT_QUAD_TOL).unwrap().value;
            let brute = brute_correction(a.parse().unwrap(), x, y, t, 2000);
            worst = worst.max((fast - brute).abs());
            points += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        worst <= 1e-6 && secs <= 300.0,
        format!("max |fast - brute| = {worst:.3e} at {points} points (<= 1e-6), {secs:.1} s (<= 300 s)"),
    );
}

const MC_QUERIES: [(&str, f64, f64); 4] = [("0.3", 0.0, 1.0), ("0.3", -1.0, 1.0), ("0.3", 0.5, 1.0), ("0.7", 1.0, -1.0)];

#[test]
fn criterion_06_walk_matches_analytic_law() {
    let start = Instant::now();
    let cfg = McConfig::new(Sampler::SkewWalk, 0.02, 50.0, 50_000, DEFAULT_SEED).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (a, x, y) in MC_QUERIES {
        let sample = first_passage_sample(&cfg, sp(a), x, y).unwrap();
        let ks = ks_distance(&sample, cdf_of(sp(a), x, y)).unwrap();
        worst = worst.max(ks);
        parts.push(format!("({a}, {x}, {y}) {ks:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        worst <= 0.015 && secs <= 300.0,
        format!("restricted KS {} (<= 0.015), {secs:.1} s (<= 300 s)", parts.join(", ")),
    );
}

#[test]
fn criterion_07_samplers_agree() {
    let delta = 0.02;
    let walk = McConfig::new(Sampler::SkewWalk, delta, 50.0, 50_000, DEFAULT_SEED).unwrap();
    let flip = McConfig::new(Sampler::ExcursionFlip, delta * delta, 50.0, 50_000, DEFAULT_SEED + 1).unwrap();
    let a = first_passage_sample(&walk, sp("0.3"), 0.0, 1.0).unwrap();
    let b = first_passage_sample(&flip, sp("0.3"), 0.0, 1.0).unwrap();
    let ks = ks_two_sample(&a, &b).unwrap();
    verdict(7, ks <= 0.02, format!("two-sample KS flip vs walk {ks:.4} (<= 0.02)"));
}

#[test]
fn criterion_08_ranked_heights() {
    let alpha = sp("0.3");
    let t = 1.0;
    let cfg = McConfig::new(Sampler::ExcursionFlip, 1e-4, t, 100_000, DEFAULT_SEED).unwrap();
    let heights = ranked_heights_sample(&cfg, alpha, 3).unwrap();
    let n = heights.len();
    let mut passed = n == 100_000;
    let mut worst_ratio = 0.0f64;
    for j in 1..=3 {
        for y in [0.25, 0.5, 1.0] {
            let exact = ranked_height_tail(alpha, RankedHeightQuery::new(j, y, t).unwrap(), ctrl()).unwrap().value;
            let p = heights.iter().filter(|h| h[j - 1] > y).count() as f64 / n as f64;
            let allowed = 3.0 * binomial_se(exact, n) + 0.01;
            passed &= (p - exact).abs() <= allowed;
            worst_ratio = worst_ratio.max((p - exact).abs() / allowed);
        }
    }
    verdict(8, passed, format!("worst |empirical - exact| / (3 SE + 0.01) = {worst_ratio:.3} (<= 1) over 9 cells"));
}

fn figure_panels() -> Vec<Vec<f64>> {
    let out = Command::new(env!("CARGO_BIN_EXE_skew-fpt")).args(["figure5", "--points", "100"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,t,density_minus1_to_1,density_1_to_minus1"));
    lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

/// Cumulative trapezoid of a column, starting from zero at the first time point.
fn cumulative(panel: &[&Vec<f64>], col: usize) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in panel.windows(2) {
        let last = *acc.last().unwrap();
        acc.push(last + 0.5 * (w[1][1] - w[0][1]) * (w[0][col] + w[1][col]));
    }
    acc
}

#[test]
fn criterion_09_stochastic_ordering() {
    let grid = log_grid(0.05, 50.0, 100).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for a in ["0.1", "0.25", "0.5", "0.75", "0.9"] {
        let alpha = sp(a);
        let (up, down) = (cdf_of(alpha, -1.0, 1.0), cdf_of(alpha, 1.0, -1.0));
        let diffs: Vec<f64> = grid.iter().map(|&t| up(t) - down(t)).collect();
        let ok = match alpha.value() {
            v if v < 0.5 => diffs.iter().all(|&d| d <= 0.0),
            v if v > 0.5 => diffs.iter().all(|&d| d >= 0.0),
            _ => diffs.iter().all(|d| d.abs() <= 1e-9),
        };
        passed &= ok;
        let largest = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        parts.push(format!("alpha {a} {} (max gap {largest:.2e})", if ok { "ordered" } else { "VIOLATED" }));
    }

    let rows = figure_panels();
    let panel = |a: f64| rows.iter().filter(|r| r[0] == a).collect::<Vec<_>>();
    let alphas_present = [0.1, 0.25, 0.5, 0.75, 0.9].iter().all(|&a| panel(a).len() == 100) && rows.len() == 500;
    let half_equal = panel(0.5).iter().all(|r| (r[2] - r[3]).abs() <= 1e-9);
    let mirrored = panel(0.25).iter().zip(panel(0.75)).all(|(lo, hi)| lo[1] == hi[1] && lo[2] == hi[3] && lo[3] == hi[2]);
    let quarter = panel(0.25);
    let slower_up = cumulative(&quarter, 2).iter().zip(cumulative(&quarter, 3)).all(|(u, d)| *u <= d + 1e-12);
    let figure_ok = alphas_present && half_equal && mirrored && slower_up;
    passed &= figure_ok;
    parts.push(format!(
        "figure data: five panels {alphas_present}, alpha 0.5 columns equal {half_equal}, 0.75 mirrors 0.25 {mirrored}, 0.25 trapezoid CDFs ordered {slower_up}"
    ));
    verdict(9, passed, parts.join("; "));
}

#[test]
fn criterion_10_coupled_construction() {
    let (alpha, beta) = (sp("0.3"), sp("0.6"));
    let cfg = McConfig::new(Sampler::ExcursionFlip, 1e-4, 1.0, 10_000, DEFAULT_SEED).unwrap();
    let summary = coupled_sample(&cfg, alpha, beta).unwrap();
    // rank of the first accepted β-positive excursion, cells 1..=6 and > 6,
    // on paths with at least six β-positive excursions
    let cells = 6;
    let q = alpha.value() / beta.value();
    let mut observed = vec![0u64; cells + 1];
    for (first, &positives) in summary.first_accepted.iter().zip(&summary.beta_positive) {
        if positives >= cells {
            observed[first.map_or(cells, |k| (k - 1).min(cells))] += 1;
        }
    }
    let mut probs: Vec<f64> = (0..cells).map(|k| q * (1.0 - q).powi(k as i32)).collect();
    probs.push((1.0 - q).powi(cells as i32));
    let chi = chi_square_gof(&observed, &probs).unwrap();
    let used: u64 = observed.iter().sum();
    let passed = summary.nesting_violations == 0 && chi.p_value > 0.01 && summary.first_accepted.len() == 10_000;
    verdict(
        10,
        passed,
        format!(
            "nesting violations {} (== 0) on 10000 paths; geometric chi-square p = {:.3} (> 0.01) on {used} paths",
            summary.nesting_violations, chi.p_value
        ),
    );
}
