//! Seeded random streams.
//!
//! Every random draw in a run is taken from a ChaCha stream whose 256-bit seed
//! is built from a base seed and a list of integer keys (repetition, iteration,
//! candidate index, ...), so that parallel work stays reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type QsiRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A stream keyed by `(seed, keys...)`.
pub fn keyed_rng(seed: u64, keys: &[u64]) -> QsiRng {
    let mut state = splitmix(seed);
    for (i, k) in keys.iter().enumerate() {
        state = splitmix(state ^ splitmix(k.wrapping_add(i as u64 + 1)));
    }
    let mut bytes = [0u8; 32];
    for (w, chunk) in bytes.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(state.wrapping_add(w as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Draws a fresh base seed from `rng`; child streams are then `keyed_rng(base, &[i])`.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
