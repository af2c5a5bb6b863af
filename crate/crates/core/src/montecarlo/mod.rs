//! Simulation of skew Brownian motion from first principles.
//!
//! Two independent samplers are provided. `ExcursionFlip` draws a Brownian
//! path on a time grid and flips each excursion away from 0 to a random sign.
//! `SkewWalk` is a simple random walk that leaves the origin upward with
//! probability α. Grid excursions are maximal runs of constant sign.

mod passage;
mod paths;
mod rng;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub use passage::{coupled_sample, first_passage_sample, ranked_heights_sample, CoupledSummary};
pub use paths::{
    coupled_flip, decompose, flip_excursions, flip_with, ranked_heights, ranked_heights_in, sample_bm_path,
    sample_skew_walk, CoupledPaths, ExcursionDecomposition, PathSample,
};
pub use rng::{substreams, PathStreams};
pub use stats::{
    binomial_se, chi_square_gof, ks_band, ks_distance, ks_two_sample, ChiSquare, EmpiricalDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    ExcursionFlip,
    SkewWalk,
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampler::ExcursionFlip => "excursion-flip",
            Sampler::SkewWalk => "skew-walk",
        })
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excursion-flip" => Ok(Sampler::ExcursionFlip),
            "skew-walk" => Ok(Sampler::SkewWalk),
            _ => Err(Error::domain("Sampler", format!("unknown sampler {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub sampler: Sampler,
    /// Time step for `ExcursionFlip`, spatial step for `SkewWalk` (whose time
    /// step is its square).
    pub step: f64,
    pub horizon: f64,
    pub n_paths: u64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(sampler: Sampler, step: f64, horizon: f64, n_paths: u64, seed: u64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::domain("McConfig", format!("step must be positive, got {step}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("McConfig", format!("horizon must be positive, got {horizon}")));
        }
        if n_paths == 0 {
            return Err(Error::domain("McConfig", "n_paths must be at least 1"));
        }
        Ok(Self {
            sampler,
            step,
            horizon,
            n_paths,
            seed,
        })
    }

    /// Time between grid points.
    pub fn time_step(&self) -> f64 {
        match self.sampler {
            Sampler::ExcursionFlip => self.step,
            Sampler::SkewWalk => self.step * self.step,
        }
    }
}
