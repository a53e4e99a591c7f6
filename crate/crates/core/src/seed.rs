//! Deterministic seed derivation for map tasks.
//!
//! Every random draw in an inference run descends from a single master seed.
//! Per-task generators are seeded by folding a stream path (phase tag,
//! generation, particle index) into the master seed, so numerical results do
//! not depend on which worker lane runs a task or in which order tasks
//! complete.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a stream path into `master`, yielding a well-mixed child seed.
///
/// Distinct paths of the same length produce distinct streams with
/// overwhelming probability; the empty path returns a mix of the master
/// seed itself.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix(master ^ GOLDEN_GAMMA);
    for &part in path {
        state = mix(state
            .wrapping_add(GOLDEN_GAMMA)
            .wrapping_add(mix(part ^ GOLDEN_GAMMA)));
    }
    state
}

/// A generator for the task identified by `path`, derived from `master`.
pub fn task_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
