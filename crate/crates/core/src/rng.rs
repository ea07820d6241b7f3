//! Deterministic random-number streams.
//!
//! Every draw in this crate comes from a stream keyed by the run seed, a domain
//! tag, and a short tuple of counters (step index, particle index, ...). Keys are
//! mixed with SplitMix64 finalizers into a ChaCha8 seed, so each (step, particle)
//! pair owns an independent generator. Consequences:
//!
//! * results never depend on scheduling or worker count;
//! * growing the ensemble or the horizon does not perturb the draws already
//!   assigned to existing particles and steps;
//! * replaying a single particle's noise is cheap (no fast-forwarding).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated consumers of the same seed on disjoint streams.
pub mod tag {
    pub const INIT: u64 = 0x11;
    pub const BBK: u64 = 0x22;
    pub const COUPLE: u64 = 0x33;
    pub const EULER: u64 = 0x44;
    pub const MH: u64 = 0x55;
    pub const BOOTSTRAP: u64 = 0x66;
    pub const JITTER: u64 = 0x77;
    pub const REFERENCE: u64 = 0x88;
    pub const TARGET: u64 = 0x99;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses (seed, tag, ids...) into a single well-mixed 64-bit key.
pub fn derive_key(seed: u64, tag: u64, ids: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
    h = splitmix64(h ^ tag);
    for &id in ids {
        h = splitmix64(h ^ id);
    }
    h
}

/// Generator for the stream identified by (seed, tag, ids...).
pub fn stream_rng(seed: u64, tag: u64, ids: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, tag, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<f64> = stream_rng(7, tag::BBK, &[3, 5]).random_iter().take(8).collect();
        let b: Vec<f64> = stream_rng(7, tag::BBK, &[3, 5]).random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_keys_give_distinct_streams() {
        let base: Vec<u64> = stream_rng(7, tag::BBK, &[3, 5]).random_iter().take(4).collect();
        for (seed, tag, ids) in [
            (8, tag::BBK, vec![3, 5]),
            (7, tag::COUPLE, vec![3, 5]),
            (7, tag::BBK, vec![4, 5]),
            (7, tag::BBK, vec![3, 6]),
            (7, tag::BBK, vec![3]),
        ] {
            let other: Vec<u64> = stream_rng(seed, tag, &ids).random_iter().take(4).collect();
            assert_ne!(base, other);
        }
    }

    #[test]
    fn key_mixing_scatters_counter_patterns() {
        // Adjacent (step, particle) grids should not collide; sample a block and
        // check all keys are unique.
        let mut keys: Vec<u64> = Vec::new();
        for step in 0..64 {
            for particle in 0..64 {
                keys.push(derive_key(1, tag::BBK, &[step, particle]));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), 64 * 64);
    }

    #[test]
    fn draws_are_standard_uniform_scale() {
        let mut rng = stream_rng(123, tag::INIT, &[0]);
        let mean: f64 = (0..10_000).map(|_| rng.random::<f64>()).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "uniform mean off: {mean}");
    }
}
