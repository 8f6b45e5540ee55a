//! Seeded randomness.
//!
//! Every stochastic component draws from [`Rng`], a Xoshiro256++ generator
//! seeded through SplitMix64. Integer draws use 64-bit arithmetic so a seed
//! yields the same stream on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, a pure function of `(seed, stream)`.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(self.seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Standard logistic draw, i.e. the difference of two Gumbel variables.
    pub fn logistic(&mut self) -> f64 {
        let u = self.open_uniform();
        u.ln() - (-u).ln_1p()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// Index drawn in proportion to the weights whose running sums are `cumulative`.
    pub fn weighted_index(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("non-empty weights");
        let u = self.uniform() * total;
        cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn known_first_draw() {
        // Pins the generator so silent algorithm changes are caught.
        let first = Rng::new(0).next_u64();
        let again = Xoshiro256PlusPlus::seed_from_u64(0).next_u64();
        assert_eq!(first, again);
        assert_ne!(Rng::new(0).next_u64(), Rng::new(1).next_u64());
    }

    #[test]
    fn forks_differ_and_are_reproducible() {
        let r = Rng::new(7);
        assert_eq!(r.fork(3).next_u64(), r.fork(3).next_u64());
        assert_ne!(r.fork(3).next_u64(), r.fork(4).next_u64());
    }

    #[test]
    fn uniform_ranges() {
        let mut r = Rng::new(1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let o = r.open_uniform();
            assert!(o > 0.0 && o < 1.0);
            assert!(r.logistic().is_finite());
            assert!(r.below(5) < 5);
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = Rng::new(3);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn weighted_index_respects_zero_weight() {
        let mut r = Rng::new(5);
        let cum = [0.0, 1.0, 1.0, 3.0];
        for _ in 0..1000 {
            let i = r.weighted_index(&cum);
            assert!(i == 1 || i == 3);
        }
    }
}
