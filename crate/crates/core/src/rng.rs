//! Reproducible random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (the 8-round ChaCha
//! stream cipher used as a counter-based generator). A `(seed, stream)` pair
//! fully determines a sequence: the 64-bit seed is expanded to the 256-bit key
//! with `SeedableRng::seed_from_u64` (PCG32-based expansion) and the 64-bit
//! stream id selects the ChaCha nonce. Independent tasks, such as bootstrap
//! resamples, take distinct stream ids so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids reserved by the synthetic cohort generator.
pub mod streams {
    pub const LABELS: u64 = 0x5359_4e00;
    pub const PHQ8: u64 = 0x5359_4e01;
    pub const CHUNK_COUNTS: u64 = 0x5359_4e02;
    pub const PATIENT_LATENT: u64 = 0x5359_4e03;
    pub const CHUNK_NOISE: u64 = 0x5359_4e04;
}

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
