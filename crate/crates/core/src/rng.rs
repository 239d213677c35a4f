//! Seeded generator hierarchy.
//!
//! Every random draw in the toolkit comes from a generator keyed by
//! `(master seed, module, item id)`, so results never depend on evaluation
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit key for `(seed, module, item)`.
pub fn derive_key(seed: u64, module: &str, item: u64) -> u64 {
    splitmix(splitmix(seed ^ fnv1a(module.as_bytes())) ^ splitmix(item.wrapping_add(1)))
}

/// Generator for one `(seed, module, item)` triple.
pub fn stream(seed: u64, module: &str, item: u64) -> Rng {
    Rng::seed_from_u64(derive_key(seed, module, item))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, "scenegen", 3).gen();
        let b: u64 = stream(7, "scenegen", 3).gen();
        let c: u64 = stream(7, "scenegen", 4).gen();
        let d: u64 = stream(7, "train", 3).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
