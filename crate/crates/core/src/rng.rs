//! Keyed random streams.
//!
//! Every random decision is drawn from a fresh ChaCha8 generator addressed by
//! `(seed, domain, counter)`, so a draw never depends on how many values were
//! consumed elsewhere or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// SGD example index at iteration `t`.
    SampleDraw = 1,
    /// Initial parameters.
    Init = 2,
    /// Train/test subsampling.
    Split = 3,
    /// Synthetic toy data.
    Toy = 4,
    /// Replacement example for index `i`.
    Replacement = 5,
    /// Choice of replaced indices.
    BetaIndices = 6,
    /// Probe points.
    Probe = 7,
}

/// Generator for `(seed, domain, counter)`.
pub fn keyed(seed: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain as u64);
    rng.set_word_pos(u128::from(counter) << 16);
    rng
}
