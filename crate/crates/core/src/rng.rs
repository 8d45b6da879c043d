//! Seeded randomness. Every randomized routine takes an explicit seed; trial
//! `i` of a sweep draws from its own ChaCha stream so results do not depend
//! on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{rat, Rational};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Denominator exponent of the dyadic grid used for random coefficients.
pub const DYADIC_BITS: u32 = 16;

/// Uniform dyadic rational in `[-magnitude, magnitude]`.
pub fn dyadic(rng: &mut impl Rng, magnitude: &Rational) -> Rational {
    let d = 1i64 << DYADIC_BITS;
    let k: i64 = rng.random_range(-d..=d);
    magnitude * rat(k, d)
}
