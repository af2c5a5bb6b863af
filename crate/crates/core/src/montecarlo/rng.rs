//! Per-path random streams.
//!
//! Every path owns a pair of ChaCha streams selected by its index, so a
//! path's randomness does not depend on which thread runs it or in what
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Independent streams for one path: Brownian increments (or walk steps)
/// and excursion signs are drawn from separate sources, so flipping a stored
/// path and flipping on the fly see the same numbers.
pub struct PathStreams {
    pub increments: ChaCha8Rng,
    pub signs: ChaCha8Rng,
}

pub fn substreams(seed: u64, path_index: u64) -> PathStreams {
    let mut increments = ChaCha8Rng::seed_from_u64(seed);
    let mut signs = increments.clone();
    increments.set_stream(2 * path_index);
    signs.set_stream(2 * path_index + 1);
    PathStreams { increments, signs }
}

/// `f(0), …, f(n−1)` evaluated in parallel, returned in index order.
pub(crate) fn map_paths<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}
