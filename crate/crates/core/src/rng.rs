//! Deterministic randomness shared by shuffling, permutation tests and the
//! synthetic generator.
//!
//! All draws come from ChaCha8 seeded through `seed_from_u64`. Bounded
//! integers use rejection sampling over `next_u64` so that permutations stay
//! stable across releases of the `rand` crate.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `[0, bound)`. `bound` must be non-zero.
pub fn below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    // reject the top partial bucket to stay unbiased
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// In-place Fisher–Yates shuffle.
pub fn fisher_yates<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_stays_in_range() {
        let mut rng = seeded(7);
        for bound in 1..50u64 {
            for _ in 0..20 {
                assert!(below(&mut rng, bound) < bound);
            }
        }
    }

    #[test]
    fn shuffle_is_reproducible() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b = a.clone();
        fisher_yates(&mut a, &mut seeded(3));
        fisher_yates(&mut b, &mut seeded(3));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn streams_differ() {
        let x = seeded_stream(1, 0).next_u64();
        let y = seeded_stream(1, 1).next_u64();
        assert_ne!(x, y);
    }
}
