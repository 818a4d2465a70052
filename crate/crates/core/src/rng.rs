//! Seeded randomness shared by every simulation stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in run manifests so traces can be replayed.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.9/seed_from_u64";

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer) so that each
/// device and each channel gets its own stream from one scenario seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
