//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Experiments derive
//! one independent stream per `(seed, domain, index)` triple so that trials
//! can be evaluated in any order (or in parallel) and still reproduce bit for
//! bit. The generator is ChaCha20 in its counter-based mode: the 64-bit seed
//! is expanded to the key, and the stream id selects the nonce.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Algorithm identity recorded alongside every experiment output.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9: key=seed_from_u64(seed), stream=(domain<<40)|index";

pub type Rng = ChaCha20Rng;

/// Stream for trial `index` within `domain`.
pub fn stream(seed: u64, domain: u64, index: u64) -> Rng {
    debug_assert!(index < (1 << 40));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | index);
    rng
}

/// Domain tags. Distinct call sites must use distinct tags.
pub mod domain {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const ENCODER: u64 = 4;
    pub const INPUT: u64 = 5;
    pub const HAAR_MC: u64 = 6;
    pub const ATTACK: u64 = 7;
    pub const RISK: u64 = 8;
    pub const CONCENTRATION: u64 = 9;
    pub const QEC: u64 = 10;
    pub const QDP: u64 = 11;
    pub const FRAME: u64 = 12;
    pub const CLASSIFIER: u64 = 13;
    pub const BOOTSTRAP: u64 = 14;
}
