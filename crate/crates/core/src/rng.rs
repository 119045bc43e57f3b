//! Deterministic random numbers.
//!
//! Everything random in this crate flows through [`SplitMix64`], a
//! counter-based generator: output `i` is a fixed bijective mix of
//! `seed + i * GAMMA`. The mix function is Stafford's variant 13 of the
//! 64-bit finalizer, the same construction used by `java.util.SplittableRandom`.
//! Because the state transition is a plain wrapping add and the mix uses only
//! integer ops, streams are reproducible on every platform and any output can
//! be computed without generating its predecessors.
//!
//! Independent streams are named, not numbered: [`derive_seed`] hashes a
//! parent seed, a purpose tag, and an index into a new seed, so e.g. weight
//! init and per-epoch shuffles cannot collide even when built from the same
//! config seed.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stafford variant 13 finalizer. Bijective on u64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash (seed, tag, index) into a new seed for an independent stream.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(seed ^ 0x5851_f42d_4c95_7f2d);
    for &b in tag.as_bytes() {
        h = mix64(h ^ u64::from(b)).wrapping_add(GAMMA);
    }
    mix64(h ^ index)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, 1) with 24 bits of precision.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// always tiny relative to 2^64 so the bias is far below observability,
    /// but we still use Lemire's multiply-shift to keep it exact.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let mut x = self.next_u64();
        let mut m = (x as u128) * (n as u128);
        let mut lo = m as u64;
        if lo < n {
            let t = n.wrapping_neg() % n;
            while lo < t {
                x = self.next_u64();
                m = (x as u128) * (n as u128);
                lo = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// Standard normal via Box-Muller. One draw per call; the paired value
    /// is discarded to keep the stream position a pure function of call count.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Poisson draw by inversion of the CDF product form (Knuth). Adequate
    /// for the small means used by image corruption.
    pub fn next_poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0);
        if lambda <= 0.0 {
            return 0;
        }
        let l = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.next_f64();
            if p <= l {
                return k;
            }
            k += 1;
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = {
            let mut r = SplitMix64::new(42);
            (0..64).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SplitMix64::new(42);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn counter_form_matches_sequential_form() {
        // Output i must equal mix64(seed + (i+1)*GAMMA): random access and
        // sequential generation agree.
        let seed = 0xdead_beef_cafe_f00d;
        let mut r = SplitMix64::new(seed);
        for i in 0..32u64 {
            let direct = mix64(seed.wrapping_add(GAMMA.wrapping_mul(i + 1)));
            assert_eq!(r.next_u64(), direct);
        }
    }

    #[test]
    fn derived_seeds_separate_streams() {
        let base = 7;
        let a = derive_seed(base, "init", 0);
        let b = derive_seed(base, "init", 1);
        let c = derive_seed(base, "shuffle", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        // Stable across calls.
        assert_eq!(a, derive_seed(base, "init", 0));
    }

    #[test]
    fn uniform_values_stay_in_range() {
        let mut r = SplitMix64::new(3);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
            let y = r.next_f32();
            assert!((0.0..1.0).contains(&y));
        }
    }

    #[test]
    fn below_is_unbiased_enough_and_in_range() {
        let mut r = SplitMix64::new(11);
        let mut counts = [0u32; 5];
        for _ in 0..50_000 {
            counts[r.below(5) as usize] += 1;
        }
        for &c in &counts {
            assert!((9_000..11_000).contains(&c), "counts {counts:?}");
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut r = SplitMix64::new(5);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = r.next_normal();
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn poisson_mean_tracks_lambda() {
        let mut r = SplitMix64::new(9);
        for &lambda in &[0.5, 3.0, 20.0] {
            let n = 20_000;
            let mut s = 0.0;
            for _ in 0..n {
                s += r.next_poisson(lambda) as f64;
            }
            let mean = s / n as f64;
            assert!(
                (mean - lambda).abs() < 0.1 + lambda * 0.05,
                "lambda {lambda} mean {mean}"
            );
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = SplitMix64::new(13);
        let mut xs: Vec<u32> = (0..100).collect();
        r.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
        assert_ne!(xs, (0..100).collect::<Vec<u32>>());
    }
}
