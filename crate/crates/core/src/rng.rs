//! Seed derivation and counter-based random streams.
//!
//! Every randomized loop in the crate draws from a stream addressed by
//! `(master seed, stream id, counter)`. The stream for a given address does not
//! depend on which thread evaluates it or in which order, so parallel and
//! serial runs produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Words reserved for each counter value inside a stream. No single
/// permutation or resample comes close to consuming this many.
const WORDS_PER_COUNTER: u32 = 24;

/// Random generator positioned at `(stream, counter)` under `master`.
pub fn stream(master: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(counter) << WORDS_PER_COUNTER);
    rng
}

/// Sub-seed for a named pipeline stage.
///
/// Derived by hashing, so adding or reordering stages never changes the seed
/// another stage receives.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
