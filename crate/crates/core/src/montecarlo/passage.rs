//! Monte Carlo first-passage times and ranked heights over many paths.

use rand::Rng;
use rand_distr::StandardNormal;

use serde::Serialize;

use super::paths::{
    coupled_flip, lattice_site, ranked_heights_in, sample_bm_path, steps_to_cover, ExcursionDecomposition, Flipper,
    LatticeWalker, TopHeights, BLOCK,
};
use super::rng::{map_paths, substreams, PathStreams};
use super::stats::EmpiricalDistribution;
use super::{McConfig, Sampler};
use crate::error::{Error, Result};
use crate::excursion_law::SkewParam;

/// Largest step count whose time does not exceed the horizon.
fn steps_within(step: f64, horizon: f64) -> u64 {
    let n = horizon / step;
    (n + 1e-9 * n.max(1.0)).floor() as u64
}

/// First time a flipped Brownian path from `x` crosses `y`, linearly
/// interpolated between grid points.
fn flip_passage(streams: &mut PathStreams, alpha: SkewParam, x: f64, y: f64, dt: f64, max_steps: u64) -> Option<f64> {
    let sd = dt.sqrt();
    let above = x > y;
    let mut b = x;
    let mut prev = x;
    let mut flip = Flipper::new(x);
    let PathStreams { increments, signs } = streams;
    for k in 1..=max_steps {
        let z: f64 = increments.sample(StandardNormal);
        b += sd * z;
        let (p, _) = flip.apply(b, || signs.random_bool(alpha.value()));
        if (p <= y) == above {
            let frac = (y - prev) / (p - prev);
            return Some(((k - 1) as f64 + frac) * dt);
        }
        prev = p;
    }
    None
}

/// First time the skew walk reaches the target site.
fn walk_passage<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: SkewParam,
    start: i64,
    target: i64,
    dt: f64,
    max_steps: u64,
) -> Option<f64> {
    let mut walker = LatticeWalker::new(start, alpha);
    let mut steps = 0u64;
    while steps < max_steps {
        // the target cannot be passed within a block that starts this far away
        if max_steps - steps >= BLOCK as u64 && (target - walker.site).abs() >= BLOCK && walker.try_block(rng) {
            steps += BLOCK as u64;
        } else {
            walker.step(rng);
            steps += 1;
        }
        if walker.site == target {
            return Some(steps as f64 * dt);
        }
    }
    None
}

/// Samples `T_y` under `P_x` on `cfg.n_paths` independent paths. Path `i`
/// uses substream `i` of `cfg.seed`, so the result does not depend on the
/// number of threads.
///
/// The skew walk starts and stops at the lattice sites nearest `x` and `y`.
pub fn first_passage_sample(cfg: &McConfig, alpha: SkewParam, x: f64, y: f64) -> Result<EmpiricalDistribution> {
    if !(x.is_finite() && y.is_finite()) || x == y {
        return Err(Error::domain("first_passage_sample", format!("need finite x ≠ y, got x = {x}, y = {y}")));
    }
    let times: Vec<Option<f64>> = match cfg.sampler {
        Sampler::ExcursionFlip => {
            let max_steps = steps_within(cfg.step, cfg.horizon);
            map_paths(cfg.n_paths, |i| {
                flip_passage(&mut substreams(cfg.seed, i), alpha, x, y, cfg.step, max_steps)
            })
        }
        Sampler::SkewWalk => {
            let (start, target) = (lattice_site(x, cfg.step), lattice_site(y, cfg.step));
            if start == target {
                return Err(Error::domain(
                    "first_passage_sample",
                    format!("x = {x} and y = {y} round to the same lattice site for step {}", cfg.step),
                ));
            }
            let dt = cfg.step * cfg.step;
            let max_steps = steps_within(dt, cfg.horizon);
            map_paths(cfg.n_paths, |i| {
                walk_passage(&mut substreams(cfg.seed, i).increments, alpha, start, target, dt, max_steps)
            })
        }
    };
    let n_censored = times.iter().filter(|t| t.is_none()).count();
    Ok(EmpiricalDistribution::new(
        times.into_iter().flatten().collect(),
        n_censored,
        cfg.horizon,
    ))
}

/// The `j_max` largest excursion heights on `[0, cfg.horizon]` of
/// `cfg.n_paths` flipped Brownian paths from 0, one vector per path.
pub fn ranked_heights_sample(cfg: &McConfig, alpha: SkewParam, j_max: usize) -> Result<Vec<Vec<f64>>> {
    if cfg.sampler != Sampler::ExcursionFlip {
        return Err(Error::domain("ranked_heights_sample", "ranked heights are sampled with the excursion-flip sampler"));
    }
    let n = steps_to_cover(cfg.step, cfg.horizon);
    let n = if n as f64 * cfg.step > cfg.horizon * (1.0 + 1e-12) { n - 1 } else { n };
    let sd = cfg.step.sqrt();
    Ok(map_paths(cfg.n_paths, |i| {
        let PathStreams { mut increments, mut signs } = substreams(cfg.seed, i);
        let mut flip = Flipper::new(0.0);
        let mut top = TopHeights::new(j_max);
        let mut b = 0.0;
        for _ in 0..n {
            let z: f64 = increments.sample(StandardNormal);
            b += sd * z;
            let (p, fresh) = flip.apply(b, || signs.random_bool(alpha.value()));
            top.observe(p, fresh);
        }
        top.finish()
    }))
}

/// Per-path outcomes of the coupled construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSummary {
    /// Paths on which some α-positive excursion is not β-positive, or the
    /// α-path lies above the β-path somewhere.
    pub nesting_violations: usize,
    /// Rank among the β-positive excursions of the first α-positive one.
    pub first_accepted: Vec<Option<usize>>,
    pub beta_positive: Vec<usize>,
    /// Highest excursion of the α-path on `[0, cfg.horizon]`.
    pub alpha_max_heights: Vec<f64>,
}

/// Runs [`coupled_flip`] on `cfg.n_paths` Brownian grid paths from 0.
pub fn coupled_sample(cfg: &McConfig, alpha: SkewParam, beta: SkewParam) -> Result<CoupledSummary> {
    if cfg.sampler != Sampler::ExcursionFlip {
        return Err(Error::domain("coupled_sample", "the coupling is built on the excursion-flip sampler"));
    }
    let per_path = map_paths(cfg.n_paths, |i| -> Result<_> {
        let PathStreams { mut increments, mut signs } = substreams(cfg.seed, i);
        let path = sample_bm_path(cfg.step, cfg.horizon, &mut increments)?;
        let c = coupled_flip(&path, alpha, beta, &mut signs)?;
        let nested = c.alpha_signs.iter().zip(&c.beta_signs).all(|(&a, &b)| a < 0 || b > 0)
            && c.alpha_path.positions.iter().zip(&c.beta_path.positions).all(|(a, b)| a <= b);
        let dec = super::paths::decompose(&path);
        let alpha_dec = ExcursionDecomposition {
            signs: c.alpha_signs.clone(),
            ..dec
        };
        let m1 = ranked_heights_in(&c.alpha_path, &alpha_dec, cfg.horizon, 1)[0];
        let beta_positive = c.beta_signs.iter().filter(|&&s| s > 0).count();
        Ok((nested, c.first_accepted, beta_positive, m1))
    });
    let mut summary = CoupledSummary {
        nesting_violations: 0,
        first_accepted: Vec::new(),
        beta_positive: Vec::new(),
        alpha_max_heights: Vec::new(),
    };
    for r in per_path {
        let (nested, first, beta_positive, m1) = r?;
        summary.nesting_violations += usize::from(!nested);
        summary.first_accepted.push(first);
        summary.beta_positive.push(beta_positive);
        summary.alpha_max_heights.push(m1);
    }
    Ok(summary)
}
