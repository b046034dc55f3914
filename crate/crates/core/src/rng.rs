//! Named random-stream derivation.
//!
//! Every stochastic component draws from `stream(seed, component, index)`,
//! so a run is reproducible from the user seed alone and independent of
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a seed for a named sub-component, e.g. one replicate of an
/// experiment.
pub fn derive_seed(seed: u64, component: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(component)) ^ index)
}

/// Independent stream for `(component, index)` under `seed`.
pub fn stream(seed: u64, component: &str, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = seed ^ fnv1a(component);
    for chunk in key.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
