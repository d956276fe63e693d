//! Seeded random-number contract.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds a
//! [`ChaCha8Rng`] from it with `seed_from_u64`. The ChaCha stream is
//! value-stable across platforms and crate releases, so a seed fully
//! determines every draw. Normal variates come from
//! [`rand_distr::StandardNormal`] (ziggurat), which consumes the stream
//! deterministically.
//!
//! Independent sub-streams for replicates or parallel jobs are derived with
//! [`substream`]: `splitmix64(seed ^ splitmix64(index + 1))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent sub-stream of `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

#[inline]
pub fn std_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(42);
        let mut b = seeded(42);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn substreams_differ() {
        let s: Vec<u64> = (0..16).map(|i| substream(7, i)).collect();
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(substream(7, 3), substream(7, 3));
    }

    #[test]
    fn pinned_first_draw() {
        // The integer contract: this value must never change.
        let mut r = seeded(0);
        let first = r.random::<u64>();
        let mut r2 = seeded(0);
        assert_eq!(first, r2.random::<u64>());
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
