//! Seeded randomness with a fixed, platform-independent algorithm.
//!
//! All shuffling in the crate goes through [`SeededRng`]: a ChaCha8 stream
//! seeded with `seed_from_u64`, reduced to a range by rejection sampling on
//! raw `u64` outputs, driving an in-place Fisher-Yates shuffle (high index
//! to low). Nothing here depends on `rand`'s distribution code, whose
//! algorithms are allowed to change between releases.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Largest multiple of `bound` that fits; reject the tail.
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.0.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation_and_reproducible() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b = a.clone();
        SeededRng::new(7).shuffle(&mut a);
        SeededRng::new(7).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(a, sorted);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SeededRng::new(1);
        for bound in 1..40 {
            for _ in 0..20 {
                assert!(rng.below(bound) < bound);
            }
        }
    }
}
