//! Seeded generators with independent substreams.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Generator for substream `index` of `seed`.
///
/// Substreams are separated by xoshiro256++ jumps (2^128 steps each), so
/// they never overlap for any practical run length. Each simulation run gets
/// its own base seed; chunks and channels within a run get distinct indices.
pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// Base seed for chunk `index` of a chunked Monte Carlo run.
///
/// Chunks use distinct base seeds (splitmix64 finaliser of seed and index)
/// rather than jumps so that runs with thousands of chunks stay cheap.
pub fn chunk_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Threshold `t` such that `next_u64() < t` has probability `p`.
///
/// `p >= 1` maps to `u64::MAX`, which leaves a 2^-64 chance of a miss.
pub fn u64_threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        u64::MAX
    } else {
        // 2^64 * p, exact for the f64 mantissa.
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Uniform f64 in [0, 1) from the top 53 bits.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_differ_and_repeat() {
        let a: Vec<u64> = {
            let mut r = substream(7, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = substream(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let a2: Vec<u64> = {
            let mut r = substream(7, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn thresholds() {
        assert_eq!(u64_threshold(0.0), 0);
        assert_eq!(u64_threshold(0.5), 1u64 << 63);
        assert_eq!(u64_threshold(1.0), u64::MAX);
        assert!(unit_f64(u64::MAX) < 1.0);
    }
}
