//! Grid paths: Brownian samples, excursion flipping, the coupled
//! construction, the skew random walk, and ranked excursion heights.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::excursion_law::SkewParam;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub start: f64,
}

impl PathSample {
    /// Number of grid points at times `≤ t` (always at least the start).
    fn points_until(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).max(1)
    }
}

/// Number of steps of size `step` needed to cover `[0, horizon]`.
pub(crate) fn steps_to_cover(step: f64, horizon: f64) -> usize {
    let n = horizon / step;
    // tolerate representation error in exact multiples such as 1/1e-4
    let r = n.round();
    if (n - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        n.ceil() as usize
    }
}

fn check_step(op: &'static str, name: &str, step: f64, horizon: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(op, format!("{name} must be positive, got {step}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::domain(op, format!("horizon must be finite and non-negative, got {horizon}")));
    }
    Ok(())
}

/// Brownian motion from 0 on the grid `k·dt`, `k = 0..=⌈horizon/dt⌉`.
pub fn sample_bm_path<R: Rng + ?Sized>(dt: f64, horizon: f64, rng: &mut R) -> Result<PathSample> {
    check_step("sample_bm_path", "dt", dt, horizon)?;
    let n = steps_to_cover(dt, horizon);
    let sd = dt.sqrt();
    let mut times = Vec::with_capacity(n + 1);
    let mut positions = Vec::with_capacity(n + 1);
    let mut b = 0.0;
    times.push(0.0);
    positions.push(0.0);
    for k in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        b += sd * z;
        times.push(k as f64 * dt);
        positions.push(b);
    }
    Ok(PathSample {
        times,
        positions,
        start: 0.0,
    })
}

/// Streaming version of the flip: tracks which run of constant sign the
/// source path is in and the sign assigned to it.
#[derive(Debug, Clone)]
pub(crate) struct Flipper {
    positive_run: bool,
    sign: f64,
    started: bool,
}

impl Flipper {
    /// A path started away from 0 keeps its sign until the first crossing.
    pub(crate) fn new(start: f64) -> Self {
        Flipper {
            positive_run: start > 0.0,
            sign: if start < 0.0 { -1.0 } else { 1.0 },
            started: start != 0.0,
        }
    }

    /// Flipped value of source point `b`, and whether `b` opens a new excursion.
    #[inline]
    pub(crate) fn apply(&mut self, b: f64, draw_positive: impl FnOnce() -> bool) -> (f64, bool) {
        let positive = b > 0.0;
        let fresh = !self.started || positive != self.positive_run;
        if fresh {
            self.started = true;
            self.positive_run = positive;
            self.sign = if draw_positive() { 1.0 } else { -1.0 };
        }
        (self.sign * b.abs(), fresh)
    }
}

/// Excursion structure of a grid path after its start point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionDecomposition {
    /// Inclusive index ranges; they partition `1..len`.
    pub intervals: Vec<(usize, usize)>,
    pub signs: Vec<i8>,
    /// Maximum over the interval for positive excursions, 0 for negative ones.
    pub heights: Vec<f64>,
    /// The last excursion is still open at the end of the path.
    pub final_incomplete: bool,
}

impl ExcursionDecomposition {
    fn from_runs(path: &PathSample, intervals: Vec<(usize, usize)>, signs: Vec<i8>) -> Self {
        let heights = intervals
            .iter()
            .zip(&signs)
            .map(|(&(s, e), &sign)| {
                if sign > 0 {
                    path.positions[s..=e].iter().copied().fold(0.0, f64::max)
                } else {
                    0.0
                }
            })
            .collect();
        let final_incomplete = path.positions.last().is_some_and(|&p| p != 0.0) && !intervals.is_empty();
        ExcursionDecomposition {
            intervals,
            signs,
            heights,
            final_incomplete,
        }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Maximal runs of constant sign (points `> 0` versus the rest).
fn sign_runs(positions: &[f64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let n = positions.len();
    let mut start = 1;
    while start < n {
        let positive = positions[start] > 0.0;
        let mut end = start;
        while end + 1 < n && (positions[end + 1] > 0.0) == positive {
            end += 1;
        }
        runs.push((start, end));
        start = end + 1;
    }
    runs
}

/// Splits a path into excursions at its sign changes.
pub fn decompose(path: &PathSample) -> ExcursionDecomposition {
    let runs = sign_runs(&path.positions);
    let signs = runs
        .iter()
        .map(|&(s, _)| if path.positions[s] > 0.0 { 1 } else { -1 })
        .collect();
    ExcursionDecomposition::from_runs(path, runs, signs)
}

/// Flips each excursion of `path` to the sign returned by `draw_positive`
/// (one call per excursion, in order). Returns the flipped path and its
/// decomposition, whose intervals are those of the source path: after
/// flipping, neighbouring excursions of equal sign are no longer separated
/// by a sign change.
pub fn flip_with(path: &PathSample, mut draw_positive: impl FnMut() -> bool) -> (PathSample, ExcursionDecomposition) {
    let runs = sign_runs(&path.positions);
    let mut positions = path.positions.clone();
    let mut signs = Vec::with_capacity(runs.len());
    for &(s, e) in &runs {
        let sign: i8 = if draw_positive() { 1 } else { -1 };
        for p in &mut positions[s..=e] {
            *p = sign as f64 * p.abs();
        }
        signs.push(sign);
    }
    let flipped = PathSample {
        times: path.times.clone(),
        positions,
        start: path.start,
    };
    let decomposition = ExcursionDecomposition::from_runs(&flipped, runs, signs);
    (flipped, decomposition)
}

/// Skew Brownian motion from a Brownian grid path: each excursion is made
/// positive with probability α.
pub fn flip_excursions<R: Rng + ?Sized>(path: &PathSample, alpha: SkewParam, rng: &mut R) -> PathSample {
    flip_with(path, || rng.random_bool(alpha.value())).0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPaths {
    pub alpha_path: PathSample,
    pub beta_path: PathSample,
    pub alpha_signs: Vec<i8>,
    pub beta_signs: Vec<i8>,
    /// Rank among the β-positive excursions of the first α-positive one.
    pub first_accepted: Option<usize>,
}

/// Two skew paths on one Brownian path: the β-path gets positive signs with
/// probability β, and each β-positive excursion stays positive in the α-path
/// with probability α/β.
pub fn coupled_flip<R: Rng + ?Sized>(
    path: &PathSample,
    alpha: SkewParam,
    beta: SkewParam,
    rng: &mut R,
) -> Result<CoupledPaths> {
    if !(alpha.value() < beta.value()) {
        return Err(Error::domain("coupled_flip", format!("need alpha < beta, got {alpha} and {beta}")));
    }
    let keep = alpha.value() / beta.value();
    let mut pairs = Vec::new();
    let (beta_path, beta_dec) = flip_with(path, || {
        let up = rng.random_bool(beta.value());
        pairs.push(up && rng.random_bool(keep));
        up
    });
    let mut alpha_signs = Vec::with_capacity(pairs.len());
    let mut alpha_positions = path.positions.clone();
    let mut first_accepted = None;
    let mut beta_rank = 0;
    for (&(s, e), (&accepted, &beta_sign)) in beta_dec.intervals.iter().zip(pairs.iter().zip(&beta_dec.signs)) {
        if beta_sign > 0 {
            beta_rank += 1;
            if accepted && first_accepted.is_none() {
                first_accepted = Some(beta_rank);
            }
        }
        let sign: i8 = if accepted { 1 } else { -1 };
        for p in &mut alpha_positions[s..=e] {
            *p = sign as f64 * p.abs();
        }
        alpha_signs.push(sign);
    }
    Ok(CoupledPaths {
        alpha_path: PathSample {
            times: path.times.clone(),
            positions: alpha_positions,
            start: path.start,
        },
        beta_path,
        alpha_signs,
        beta_signs: beta_dec.signs,
        first_accepted,
    })
}

/// Nearest lattice site to `x` for spacing `delta`.
pub(crate) fn lattice_site(x: f64, delta: f64) -> i64 {
    (x / delta).round() as i64
}

/// Simple random walk in lattice units whose step from site 0 goes up with
/// probability α.
pub(crate) struct LatticeWalker {
    pub(crate) site: i64,
    alpha: f64,
    bits: u64,
    nbits: u32,
}

/// Steps taken at once by [`LatticeWalker::try_block`].
pub(crate) const BLOCK: i64 = 64;

impl LatticeWalker {
    pub(crate) fn new(site: i64, alpha: SkewParam) -> Self {
        LatticeWalker {
            site,
            alpha: alpha.value(),
            bits: 0,
            nbits: 0,
        }
    }

    #[inline]
    pub(crate) fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.site == 0 {
            self.site = if rng.random_bool(self.alpha) { 1 } else { -1 };
            return;
        }
        if self.nbits == 0 {
            self.bits = rng.next_u64();
            self.nbits = 64;
        }
        self.site += if self.bits & 1 == 1 { 1 } else { -1 };
        self.bits >>= 1;
        self.nbits -= 1;
    }

    /// Takes [`BLOCK`] steps from a single word when that is equivalent to
    /// taking them one by one: the bit buffer is empty and site 0 cannot be
    /// left within the block.
    #[inline]
    pub(crate) fn try_block<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.nbits != 0 || self.site.abs() < BLOCK {
            return false;
        }
        let word = rng.next_u64();
        self.site += 2 * word.count_ones() as i64 - BLOCK;
        true
    }
}

/// Skew random walk with spatial step `delta` and time step `delta²`,
/// started at the lattice site nearest `start`.
pub fn sample_skew_walk<R: Rng + ?Sized>(
    alpha: SkewParam,
    start: f64,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSample> {
    check_step("sample_skew_walk", "delta", delta, horizon)?;
    if !start.is_finite() {
        return Err(Error::domain("sample_skew_walk", format!("start must be finite, got {start}")));
    }
    let dt = delta * delta;
    let n = steps_to_cover(dt, horizon);
    let mut walker = LatticeWalker::new(lattice_site(start, delta), alpha);
    let start = walker.site as f64 * delta;
    let mut times = Vec::with_capacity(n + 1);
    let mut positions = Vec::with_capacity(n + 1);
    times.push(0.0);
    positions.push(start);
    for k in 1..=n {
        walker.step(rng);
        times.push(k as f64 * dt);
        positions.push(walker.site as f64 * delta);
    }
    Ok(PathSample { times, positions, start })
}

/// Running top-`k` of excursion heights, padded with zeros.
#[derive(Debug, Clone)]
pub(crate) struct TopHeights {
    heights: Vec<f64>,
    current: f64,
}

impl TopHeights {
    pub(crate) fn new(k: usize) -> Self {
        TopHeights {
            heights: vec![0.0; k],
            current: 0.0,
        }
    }

    fn commit(&mut self) {
        let h = std::mem::take(&mut self.current);
        let Some(&last) = self.heights.last() else { return };
        if h > last {
            let at = self.heights.partition_point(|&x| x >= h);
            self.heights.pop();
            self.heights.insert(at, h);
        }
    }

    /// Feeds the next flipped point; `fresh` marks the start of an excursion.
    #[inline]
    pub(crate) fn observe(&mut self, p: f64, fresh: bool) {
        if fresh {
            self.commit();
        }
        if p > self.current {
            self.current = p;
        }
    }

    pub(crate) fn finish(mut self) -> Vec<f64> {
        self.commit();
        self.heights
    }
}

fn top_k(heights: impl IntoIterator<Item = f64>, k: usize) -> Vec<f64> {
    let mut top = TopHeights::new(k);
    for h in heights {
        top.observe(h, true);
    }
    top.finish()
}

/// The `j_max` largest excursion heights of `path` on `[0, t]`, descending
/// and padded with zeros. Excursions are delimited by sign changes; for a
/// flipped path use [`ranked_heights_in`] with the source decomposition.
pub fn ranked_heights(path: &PathSample, t: f64, j_max: usize) -> Vec<f64> {
    let n = path.points_until(t);
    let prefix = PathSample {
        times: path.times[..n].to_vec(),
        positions: path.positions[..n].to_vec(),
        start: path.start,
    };
    top_k(decompose(&prefix).heights, j_max)
}

/// Ranked heights on `[0, t]` with excursion boundaries taken from `dec`.
pub fn ranked_heights_in(path: &PathSample, dec: &ExcursionDecomposition, t: f64, j_max: usize) -> Vec<f64> {
    let n = path.points_until(t);
    let heights = dec
        .intervals
        .iter()
        .zip(&dec.signs)
        .filter(|(&(s, _), _)| s < n)
        .map(|(&(s, e), &sign)| {
            if sign > 0 {
                path.positions[s..=e.min(n - 1)].iter().copied().fold(0.0, f64::max)
            } else {
                0.0
            }
        });
    top_k(heights, j_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::rng::substreams;
    use crate::montecarlo::stats::{ks_distance, EmpiricalDistribution};
    use crate::kernels::normal_cdf;

    fn path_of(positions: &[f64]) -> PathSample {
        PathSample {
            times: (0..positions.len()).map(|k| k as f64).collect(),
            positions: positions.to_vec(),
            start: positions[0],
        }
    }

    fn sp(s: &str) -> SkewParam {
        s.parse().unwrap()
    }

    #[test]
    fn bm_path_shape_and_determinism() {
        let p = sample_bm_path(0.01, 1.0, &mut substreams(1, 0).increments).unwrap();
        assert_eq!(p.positions.len(), 101);
        assert_eq!((p.times[0], p.positions[0]), (0.0, 0.0));
        assert!((p.times[100] - 1.0).abs() < 1e-12);
        let q = sample_bm_path(0.01, 1.0, &mut substreams(1, 0).increments).unwrap();
        assert_eq!(p, q);
        assert_eq!(sample_bm_path(0.3, 1.0, &mut substreams(1, 0).increments).unwrap().positions.len(), 5);
        assert!(sample_bm_path(0.0, 1.0, &mut substreams(1, 0).increments).is_err());
    }

    #[test]
    fn bm_path_moments_at_unit_time() {
        let n = 100_000u64;
        let ends: Vec<f64> = crate::montecarlo::rng::map_paths(n, |i| {
            *sample_bm_path(0.01, 1.0, &mut substreams(11, i).increments).unwrap().positions.last().unwrap()
        });
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn forced_positive_flip_is_reflection() {
        let p = sample_bm_path(0.01, 2.0, &mut substreams(2, 0).increments).unwrap();
        let (q, dec) = flip_with(&p, || true);
        assert!(q.positions.iter().zip(&p.positions).all(|(a, b)| *a == b.abs()));
        assert!(dec.signs.iter().all(|&s| s == 1));
    }

    #[test]
    fn flip_preserves_magnitude() {
        let mut s = substreams(3, 0);
        let p = sample_bm_path(0.001, 1.0, &mut s.increments).unwrap();
        let q = flip_excursions(&p, sp("0.3"), &mut s.signs);
        assert!(q.positions.iter().zip(&p.positions).all(|(a, b)| a.abs() == b.abs()));
        assert_eq!(q.times, p.times);
    }

    #[test]
    fn positive_excursion_fraction() {
        let alpha = 0.3;
        let counts: Vec<(usize, usize)> = crate::montecarlo::rng::map_paths(10_000, |i| {
            let mut s = substreams(5, i);
            let p = sample_bm_path(0.01, 1.0, &mut s.increments).unwrap();
            let (_, dec) = flip_with(&p, || s.signs.random_bool(alpha));
            (dec.signs.iter().filter(|&&x| x > 0).count(), dec.len())
        });
        let pos: usize = counts.iter().map(|c| c.0).sum();
        let all: usize = counts.iter().map(|c| c.1).sum();
        let frac = pos as f64 / all as f64;
        let band = 3.0 * (alpha * (1.0 - alpha) / all as f64).sqrt();
        assert!((frac - alpha).abs() < band, "{frac} from {all} excursions");
    }

    #[test]
    fn decomposition_partitions_path() {
        let p = path_of(&[0.0, 1.0, 2.0, -1.0, -0.5, 3.0, 0.0, 1.0]);
        let d = decompose(&p);
        assert_eq!(d.intervals, vec![(1, 2), (3, 4), (5, 5), (6, 6), (7, 7)]);
        assert_eq!(d.signs, vec![1, -1, 1, -1, 1]);
        assert_eq!(d.heights, vec![2.0, 0.0, 3.0, 0.0, 1.0]);
        assert!(d.final_incomplete);
    }

    #[test]
    fn ranked_heights_of_triangles() {
        let p = path_of(&[0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        assert_eq!(ranked_heights(&p, 12.0, 3), vec![3.0, 2.0, 1.0]);
        assert_eq!(ranked_heights(&p, 12.0, 5), vec![3.0, 2.0, 1.0, 0.0, 0.0]);
        // final incomplete excursion counts
        assert_eq!(ranked_heights(&p, 10.0, 3), vec![3.0, 2.0, 1.0]);
        assert_eq!(ranked_heights(&p, 3.5, 2), vec![3.0, 0.0]);
        let neg = path_of(&[0.0, -1.0, -2.0, -0.5, -3.0]);
        assert_eq!(ranked_heights(&neg, 4.0, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn streaming_flip_matches_stored_flip() {
        let alpha = sp("0.3");
        for i in 0..20 {
            let mut s = substreams(9, i);
            let p = sample_bm_path(1e-3, 1.0, &mut s.increments).unwrap();
            let (q, dec) = flip_with(&p, || s.signs.random_bool(alpha.value()));
            let stored = ranked_heights_in(&q, &dec, 0.75, 4);

            let mut s = substreams(9, i);
            let mut flip = Flipper::new(0.0);
            let mut top = TopHeights::new(4);
            for &b in &p.positions[1..=750] {
                let (v, fresh) = flip.apply(b, || s.signs.random_bool(alpha.value()));
                top.observe(v, fresh);
            }
            assert_eq!(stored, top.finish());
        }
    }

    #[test]
    fn coupled_paths_are_nested() {
        let (a, b) = (sp("0.3"), sp("0.6"));
        for i in 0..200 {
            let mut s = substreams(4, i);
            let p = sample_bm_path(1e-3, 1.0, &mut s.increments).unwrap();
            let c = coupled_flip(&p, a, b, &mut s.signs).unwrap();
            assert_eq!(c.alpha_signs.len(), c.beta_signs.len());
            assert!(c.alpha_signs.iter().zip(&c.beta_signs).all(|(&x, &y)| x < 0 || y > 0));
            for k in 0..p.positions.len() {
                assert_eq!(c.alpha_path.positions[k].abs(), p.positions[k].abs());
                assert!(c.alpha_path.positions[k] <= c.beta_path.positions[k]);
            }
        }
        let p = sample_bm_path(1e-2, 1.0, &mut substreams(4, 0).increments).unwrap();
        assert!(coupled_flip(&p, b, a, &mut substreams(4, 0).signs).is_err());
    }

    #[test]
    fn symmetric_walk_is_gaussian_at_unit_time() {
        let delta = 0.02;
        let n = 10_000u64;
        let ends: Vec<f64> = crate::montecarlo::rng::map_paths(n, |i| {
            let mut s = substreams(21, i);
            let p = sample_skew_walk(SkewParam::HALF, 0.0, delta, 1.0, &mut s.increments).unwrap();
            // spread each lattice value uniformly over its cell of width 2δ
            p.positions.last().unwrap() + delta * (2.0 * s.signs.random::<f64>() - 1.0)
        });
        let d = ks_distance(&EmpiricalDistribution::new(ends, 0, f64::INFINITY), |x| normal_cdf(x).unwrap()).unwrap();
        assert!(d <= 0.02, "{d}");
    }

    #[test]
    fn walk_is_lattice_and_reproducible() {
        let p = sample_skew_walk(sp("0.3"), 0.5, 0.02, 0.5, &mut substreams(8, 2).increments).unwrap();
        assert_eq!(p.start, 0.5);
        for w in p.positions.windows(2) {
            assert!(((w[1] - w[0]).abs() - 0.02).abs() < 1e-12);
        }
        let q = sample_skew_walk(sp("0.3"), 0.5, 0.02, 0.5, &mut substreams(8, 2).increments).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn walk_leaves_origin_upward_with_probability_alpha() {
        let n = 40_000u64;
        let ups = crate::montecarlo::rng::map_paths(n, |i| {
            let p = sample_skew_walk(sp("0.3"), 0.0, 0.1, 0.01, &mut substreams(6, i).increments).unwrap();
            (p.positions[1] > 0.0) as u64
        })
        .iter()
        .sum::<u64>();
        let frac = ups as f64 / n as f64;
        assert!((frac - 0.3).abs() < 3.0 * (0.21 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn block_steps_match_single_steps() {
        let alpha = sp("0.4");
        let mut s1 = substreams(1, 1).increments;
        let mut s2 = substreams(1, 1).increments;
        let mut a = LatticeWalker::new(100, alpha);
        let mut b = LatticeWalker::new(100, alpha);
        for _ in 0..20_000 {
            if b.try_block(&mut s2) {
                for _ in 0..BLOCK {
                    a.step(&mut s1);
                }
            } else {
                b.step(&mut s2);
                a.step(&mut s1);
            }
            assert_eq!(a.site, b.site);
        }
    }
}
