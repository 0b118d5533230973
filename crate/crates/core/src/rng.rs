//! Deterministic per-pixel random streams.
//!
//! Noise fields must not depend on pixel visit order or thread count, so
//! there is no shared sequential generator. Instead `(seed, i, j, channel)`
//! is hashed through a splitmix64 chain into a 256-bit key for an
//! independent ChaCha8 stream per sample site. Identical inputs give
//! identical draws on every platform; neighboring pixels get unrelated
//! streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: bijective 64-bit avalanche mix.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one sample site.
pub fn pixel_rng(seed: u64, i: usize, j: usize, channel: usize) -> ChaCha8Rng {
    let mut acc = mix64(seed.wrapping_add(GOLDEN));
    acc = mix64(acc ^ (i as u64).wrapping_add(0xD1B5_4A32_D192_ED03));
    acc = mix64(acc ^ (j as u64).wrapping_add(0x8CB9_2BA7_2F3D_8DD7));
    acc = mix64(acc ^ (channel as u64).wrapping_add(0xABCC_5167_CCAD_925F));

    let mut key = [0u8; 32];
    let mut word = acc;
    for chunk in key.chunks_exact_mut(8) {
        word = mix64(word.wrapping_add(GOLDEN));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Generator for non-pixel uses (texture phases, palette shuffles) keyed by
/// a seed and a purpose tag so different uses never share a stream.
pub fn stream_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut acc = mix64(seed.wrapping_add(GOLDEN));
    acc = mix64(acc ^ tag.wrapping_add(0xF1EA_5EED_BADC_0FEE));

    let mut key = [0u8; 32];
    let mut word = acc;
    for chunk in key.chunks_exact_mut(8) {
        word = mix64(word.wrapping_add(GOLDEN));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
