//! Deterministic random-stream derivation.
//!
//! Every randomized operation takes an explicit generator. Independent
//! streams are derived from a root seed plus a tag path, so results do not
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Words reserved per course inside a trajectory stream.
const COURSE_WORDS: u128 = 1 << 24;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &tag| {
        splitmix64(acc ^ splitmix64(tag))
    })
}

pub fn stream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, path))
}

/// Stream for one Monte Carlo trajectory `b` of posterior draw `m`.
pub fn trajectory_stream(seed: u64, m: u64, b: u64) -> Stream {
    let mut rng = Stream::seed_from_u64(derive_seed(seed, &[0x6763_6f6d, m]));
    rng.set_stream(b);
    rng
}

/// Repositions a trajectory stream at the block reserved for course `k`,
/// so the randomness consumed at one course never shifts another course.
pub fn seek_course(rng: &mut Stream, k: usize) {
    rng.set_word_pos(COURSE_WORDS * k as u128);
}

pub mod tags {
    pub const SAMPLER: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const COHORT: u64 = 3;
    pub const TRUTH: u64 = 4;
    pub const REPLICATE: u64 = 5;
}
