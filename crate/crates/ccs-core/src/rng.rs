//! Deterministic stream derivation.
//!
//! Every randomized component takes a 64-bit master seed and a stream index,
//! and gets its own ChaCha12 stream. Streams are independent by construction,
//! so replications can run on any number of threads and still produce
//! bit-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream indices 0..2^32 are reserved for within-population generation.
pub const REP_STREAM_BASE: u64 = 1 << 32;
/// Streams used to approximate the true variance of the estimator.
pub const TRUTH_STREAM_BASE: u64 = 1 << 33;
/// Streams used by randomized searches (negative-witness hunting).
pub const SEARCH_STREAM_BASE: u64 = 1 << 34;

/// ChaCha12 stream `stream` keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
