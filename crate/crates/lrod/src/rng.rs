//! Deterministic substream derivation.
//!
//! One master seed drives every stochastic component. Each unit of work (an account
//! within a trial, a fold shuffle, a generator account) gets its own ChaCha8 stream
//! whose 32-byte seed is the SHA-256 of (master seed, domain tag, unit id, trial
//! index). Streams therefore do not depend on iteration order, rayon scheduling, or
//! thread count, which is what makes whole-run outputs bit-identical across `--threads`
//! settings.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the substream for `(seed, domain, unit, trial)`.
///
/// `domain` separates independent uses (forecasting, generation, fold shuffles) so two
/// components never consume the same stream even for equal unit ids.
pub fn substream(seed: u64, domain: &str, unit: &str, trial: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([0x1f]);
    h.update(domain.as_bytes());
    h.update([0x1f]);
    h.update(unit.as_bytes());
    h.update([0x1f]);
    h.update(trial.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
