//! Counter-keyed random numbers.
//!
//! Every draw is a pure function of an integer key, so potentials and noise can
//! be evaluated lazily, in any order, from any thread, and reproduce bitwise.
//! The mixing function is the SplitMix64 finaliser applied to a chained key.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain separators so that the potential, the noise and the steering
/// resampler never share key streams.
pub mod domain {
    pub const SHOT_COUNT: u64 = 0x5348_4f54_434e_5431;
    pub const SHOT_POINT: u64 = 0x5348_4f54_5054_5331;
    pub const TRIG_COEF: u64 = 0x5452_4947_434f_4546;
    pub const WIENER: u64 = 0x5749_454e_4552_3031;
    pub const STEER: u64 = 0x5354_4545_5230_3031;
    pub const REPLICATE: u64 = 0x5245_504c_4943_4154;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a seed, a domain tag and up to three counters into 64 random bits.
#[inline]
pub fn hash(seed: u64, domain: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed ^ domain);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.rotate_left(17));
    splitmix64(h ^ c.rotate_left(43))
}

/// Uniform variate in the open interval (0, 1).
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Standard normal variate from a key (Box–Muller, cosine branch).
#[inline]
pub fn normal(seed: u64, domain: u64, a: u64, b: u64, c: u64) -> f64 {
    let u1 = open_unit(hash(seed, domain, a, b, c));
    let u2 = open_unit(hash(seed, domain ^ GOLDEN, a, b, c));
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Derives an independent seed for replicate `index` of a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    hash(base, domain::REPLICATE, index, 0, 0)
}

/// Sequential draws under a fixed key, for cases where a key yields several
/// variates (e.g. the points of one Poisson cell).
#[derive(Debug, Clone)]
pub struct KeyedStream {
    seed: u64,
    domain: u64,
    a: u64,
    b: u64,
    counter: u64,
}

impl KeyedStream {
    pub fn new(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        Self { seed, domain, a, b, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let h = hash(self.seed, self.domain, self.a, self.b, self.counter);
        self.counter += 1;
        h
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        open_unit(self.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_key_sensitive() {
        assert_eq!(hash(1, 2, 3, 4, 5), hash(1, 2, 3, 4, 5));
        assert_ne!(hash(1, 2, 3, 4, 5), hash(1, 2, 3, 4, 6));
        assert_ne!(hash(1, 2, 3, 4, 5), hash(1, 2, 4, 3, 5));
        assert_ne!(hash(1, 2, 3, 4, 5), hash(2, 2, 3, 4, 5));
    }

    #[test]
    fn open_unit_never_hits_endpoints() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn normal_moments() {
        let m = 200_000;
        let xs: Vec<f64> = (0..m).map(|i| normal(7, domain::WIENER, i, 0, 0)).collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!(mean.abs() < 3.0 / (m as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.015, "var {var}");
    }
}
