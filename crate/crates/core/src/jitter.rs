//! External randomization for the jittered centers, and seed splitting for
//! Monte Carlo replicates.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Identifier of the generator and of the mapping from its output to `(−1, 1)`.
pub const ALGORITHM_ID: &str = "chacha20/u52-midpoint/splitmix64-split";

/// A seeded source of uniform variables on `(−1, 1)`.
///
/// Draws come from ChaCha20 seeded with `seed_from_u64(seed)`; each 64-bit
/// word `w` maps to `2u − 1` with `u = ((w >> 12) + ½)·2⁻⁵²`, so the value is
/// never exactly ±1. A disabled source yields zeros, which removes the jitter
/// entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JitterSource {
    pub seed: u64,
    pub enabled: bool,
}

impl JitterSource {
    pub fn new(seed: u64) -> Self {
        JitterSource {
            seed,
            enabled: true,
        }
    }

    pub fn off() -> Self {
        JitterSource {
            seed: 0,
            enabled: false,
        }
    }

    pub fn algorithm_id(&self) -> &'static str {
        if self.enabled {
            ALGORITHM_ID
        } else {
            "off"
        }
    }

    pub fn stream(&self) -> JitterStream {
        JitterStream {
            rng: self.enabled.then(|| ChaCha20Rng::seed_from_u64(self.seed)),
        }
    }
}

/// The stream of `U_2, U_3, …` in consumption order.
#[derive(Debug, Clone)]
pub struct JitterStream {
    rng: Option<ChaCha20Rng>,
}

impl JitterStream {
    pub fn next_uniform(&mut self) -> f64 {
        match &mut self.rng {
            Some(rng) => 2.0 * unit_open(rng.next_u64()) - 1.0,
            None => 0.0,
        }
    }
}

/// Maps a 64-bit word to the open unit interval. With 52 bits the midpoint
/// is exact, so the result never rounds to 1.
pub(crate) fn unit_open(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under master seed `seed`:
/// `splitmix64(splitmix64(seed) ^ index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}
