//! Seed derivation.
//!
//! A user seed is expanded with splitmix64 into a 256-bit ChaCha8 key, and
//! each replicate draws from its own ChaCha stream (`stream = rep index`).
//! Sub-experiments (one per sample size, say) first derive a child seed with
//! [`derive_seed`]. Every draw is therefore a function of `(seed, stream)`
//! only, whatever the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// One step of splitmix64; returns the output and advances `state`.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `mix(seed, index)`: child seed for sub-experiment `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed;
    let a = splitmix64(&mut s);
    let mut t = a ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    splitmix64(&mut t)
}

/// Generator for replicate `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}
