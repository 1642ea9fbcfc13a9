//! Per-trial random streams.
//!
//! Every trial of a sweep gets its own ChaCha8 stream. The 256-bit key is
//! expanded from the 64-bit master seed with SplitMix64 and the 64-bit
//! stream id packs `(point_index << 40) | trial_index`. A trial's draws
//! therefore depend only on `(master_seed, point_index, trial_index)`, never
//! on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source used throughout the crate.
pub type RandomStream = ChaCha8Rng;

const TRIAL_BITS: u32 = 40;

/// Largest trial index addressable within one sweep point.
pub const MAX_TRIALS_PER_POINT: u64 = 1 << TRIAL_BITS;
/// Largest number of sweep points.
pub const MAX_POINTS: u64 = 1 << (64 - TRIAL_BITS);

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_from_seed(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A stream seeded directly from a 64-bit seed (stream id 0).
pub fn seeded(seed: u64) -> RandomStream {
    ChaCha8Rng::from_seed(key_from_seed(seed))
}

/// The stream owned by trial `trial_index` of sweep point `point_index`.
pub fn trial_stream(master_seed: u64, point_index: u64, trial_index: u64) -> RandomStream {
    assert!(point_index < MAX_POINTS, "point index {point_index} out of range");
    assert!(trial_index < MAX_TRIALS_PER_POINT, "trial index {trial_index} out of range");
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(master_seed));
    rng.set_stream((point_index << TRIAL_BITS) | trial_index);
    rng
}
