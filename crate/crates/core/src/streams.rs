//! Reproducible random streams for chunked Monte Carlo loops.
//!
//! A master generator contributes one seed; chunk `c` then draws from the
//! ChaCha8 stream `c` of that seed. Chunk boundaries depend only on the sample
//! count, so results do not depend on how many worker threads run the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) const CHUNK: usize = 4096;

pub(crate) fn derive_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// `(start, len)` pairs covering `0..total` in blocks of `CHUNK`.
pub(crate) fn chunks(total: usize) -> Vec<(usize, usize)> {
    (0..total.div_ceil(CHUNK))
        .map(|c| {
            let start = c * CHUNK;
            (start, CHUNK.min(total - start))
        })
        .collect()
}
