//! Deterministic random-stream derivation.
//!
//! All randomness in a run flows from a single master seed through named
//! derivation paths, so any unit of work (a subject, a calibration
//! replicate, an MCMC chain) owns an independent stream that does not
//! depend on scheduling or parallelism.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; the mixing function behind all seed derivation.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(master, path, index)`. The path is folded in
/// byte-wise (FNV-1a) so distinct labels yield unrelated streams.
pub fn derive_seed(master: u64, path: &str, index: u64) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64; // FNV offset basis
    for b in path.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(splitmix64(master ^ h).wrapping_add(index))
}

/// Deterministic generator for the derived stream `(master, path, index)`.
pub fn stream(master: u64, path: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path, index))
}
