//! Seeded randomness.
//!
//! Every stochastic component draws from ChaCha8 (`rand_chacha`) seeded with a
//! 64-bit value. Sub-seeds are derived from the global seed and a label by
//! taking the first 8 bytes (little endian) of
//! `SHA-256(seed.to_le_bytes() || label)`, so streams are stable across
//! platforms, thread counts and processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_are_stable() {
        assert_eq!(derive_seed(7, "filter"), derive_seed(7, "filter"));
        assert_ne!(derive_seed(7, "filter"), derive_seed(7, "explore"));
        assert_ne!(derive_seed(7, "filter"), derive_seed(8, "filter"));
    }

    const FROZEN: [u32; 4] = [224, 681, 146, 950];

    #[test]
    fn chacha_stream_is_frozen() {
        // guards against silent generator changes across dependency updates
        let mut r = seeded(42);
        let draws: Vec<u32> = (0..4).map(|_| r.gen_range(0..1000)).collect();
        assert_eq!(draws, FROZEN);
    }
}
