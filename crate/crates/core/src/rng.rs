//! Seeded randomness.
//!
//! All stochastic steps in this crate draw from ChaCha8, a portable counter
//! based generator: the same seed yields the same stream on every platform.
//! Hierarchical seeds (per tree, per ensemble member) are derived with
//! [`derive_seed`] so that substreams never overlap.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over (seed, tag); used to derive independent
/// substream seeds deterministically.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from `[0, 1)` using the top 53 bits of one 64-bit word.
pub fn next_unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `0..n` via Lemire's multiply-shift. The residual bias
/// is below n / 2^64, far beyond anything observable at our sample sizes.
pub fn next_index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    (((rng.next_u64() as u128) * (n as u128)) >> 64) as usize
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn next_standard_normal(rng: &mut Rng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - next_unit(rng);
    let u2 = next_unit(rng);
    let r = crate::num::sqrt(-2.0 * crate::num::ln(u1));
    r * crate::num::cos(2.0 * core::f64::consts::PI * u2)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle(rng: &mut Rng, items: &mut [usize]) {
    for i in (1..items.len()).rev() {
        let j = next_index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Draws `k` distinct values from `0..n` (partial Fisher-Yates), returned
/// in ascending order.
pub fn sample_without_replacement(rng: &mut Rng, n: usize, k: usize) -> alloc::vec::Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: alloc::vec::Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + next_index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}
