//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`] seeded with a
//! single user-facing `u64`. Independent consumers (batch shuffling, layer
//! sampling, weight init, data generators) get their own ChaCha stream id so
//! that adding or removing draws in one consumer never perturbs another.
//!
//! Reproducibility is guaranteed within this implementation only; values are
//! not meant to match other PRNGs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream ids. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Batches = 2,
    LayerSampling = 3,
    Points = 4,
    Blobs = 5,
    BoxCover = 6,
    GradCheck = 7,
}

/// splitmix64 finalizer, used to decorrelate nearby user seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    rng.set_stream(which as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(seed: u64, which: Stream) -> Vec<u64> {
        let mut r = stream(seed, which);
        (0..4).map(|_| r.random()).collect()
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        assert_eq!(draws(7, Stream::Init), draws(7, Stream::Init));
        assert_ne!(draws(7, Stream::Init), draws(7, Stream::Batches));
        assert_ne!(draws(7, Stream::Init), draws(8, Stream::Init));
    }
}
