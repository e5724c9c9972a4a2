//! Deterministic random number generation.
//!
//! Two flavours are provided. [`SplitMix64`] is a small sequential generator
//! for shuffles and initialisation. [`gaussian_at`] is a counter-based
//! Gaussian stream keyed on (seed, index): every voxel's noise sample is a
//! pure function of the seed and its linear index, so results do not depend
//! on evaluation order or parallel partitioning.

/// SplitMix64 finalizer; bijective on u64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map 64 random bits to a double in [0, 1) using the top 53 bits.
#[inline]
fn u01(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal sample at `index` of the stream keyed by `seed`.
///
/// Box-Muller on two uniforms derived from mix64; deterministic and
/// independent of call order.
#[inline]
pub fn gaussian_at(seed: u64, index: u64) -> f64 {
    let key = mix64(seed ^ 0x5851_f42d_4c95_7f2d);
    let u1 = u01(mix64(key ^ (2 * index))).max(f64::MIN_POSITIVE);
    let u2 = u01(mix64(key ^ (2 * index + 1)));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sequential SplitMix64 generator for shuffles, sampling and init.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        u01(self.next_u64())
    }

    /// Uniform double in [lo, hi).
    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// always far below 2^64 so the bias is negligible for test workloads,
    /// but we use Lemire's multiply-shift to keep it exact anyway.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (no caching, so the stream is a pure
    /// function of the draw count).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_stream_is_order_independent() {
        let forward: Vec<f64> = (0..100).map(|i| gaussian_at(42, i)).collect();
        let mut backward: Vec<f64> = (0..100).rev().map(|i| gaussian_at(42, i)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn counter_stream_moments() {
        let n = 200_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let g = gaussian_at(7, i);
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn different_seeds_decorrelate() {
        let n = 10_000u64;
        let same = (0..n)
            .filter(|&i| gaussian_at(1, i) == gaussian_at(2, i))
            .count();
        assert_eq!(same, 0);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = SplitMix64::new(3);
        let mut xs: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn below_is_in_range() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }
}
