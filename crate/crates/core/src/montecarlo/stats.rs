//! Goodness-of-fit statistics for simulated samples.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Simulated first-passage times. Paths that had not reached the target by
/// `horizon` are only counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    pub samples: Vec<f64>,
    pub n_censored: usize,
    pub horizon: f64,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>, n_censored: usize, horizon: f64) -> Self {
        samples.sort_by(f64::total_cmp);
        EmpiricalDistribution {
            samples,
            n_censored,
            horizon,
        }
    }

    pub fn n_total(&self) -> usize {
        self.samples.len() + self.n_censored
    }

    /// Fraction of all paths (censored included) with passage time `≤ t`.
    pub fn ecdf(&self, t: f64) -> f64 {
        let n = self.n_total();
        if n == 0 {
            return 0.0;
        }
        self.samples.partition_point(|&s| s <= t) as f64 / n as f64
    }
}

/// Kolmogorov–Smirnov distance between the samples and `cdf`. With censored
/// paths both sides are conditioned on `T ≤ horizon`.
pub fn ks_distance(dist: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let n = dist.samples.len();
    if n == 0 {
        return Err(Error::domain("ks_distance", "no uncensored samples"));
    }
    let scale = if dist.n_censored > 0 {
        let mass = cdf(dist.horizon);
        if !(mass > 0.0) {
            return Err(Error::domain("ks_distance", "reference law puts no mass before the horizon"));
        }
        mass
    } else {
        1.0
    };
    let nf = n as f64;
    let d = dist.samples.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = (cdf(x) / scale).min(1.0);
        d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
    });
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov distance. Censored paths stay in the
/// denominators, so the empirical laws are compared on `[0, horizon]`.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    if a.samples.is_empty() || b.samples.is_empty() {
        return Err(Error::domain("ks_two_sample", "no uncensored samples"));
    }
    if a.horizon != b.horizon {
        return Err(Error::domain("ks_two_sample", format!("horizons differ: {} vs {}", a.horizon, b.horizon)));
    }
    let (na, nb) = (a.n_total() as f64, b.n_total() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.samples.len() || j < b.samples.len() {
        let next = match (a.samples.get(i), b.samples.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.samples.len() && a.samples[i] <= next {
            i += 1;
        }
        while j < b.samples.len() && b.samples[j] <= next {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Half-width of the 99% Kolmogorov band for `n` samples.
pub fn ks_band(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Standard error of a proportion `p` estimated from `n` trials.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `observed` counts against cell probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::domain("chi_square_gof", "need matching counts and probabilities for at least two cells"));
    }
    if probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::domain("chi_square_gof", "cell probabilities must be positive"));
    }
    let n: u64 = observed.iter().sum();
    let statistic = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let dof = observed.len() - 1;
    let law = ChiSquared::new(dof as f64).map_err(|e| Error::domain("chi_square_gof", e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: law.sf(statistic),
    })
}
