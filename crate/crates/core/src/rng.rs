//! Deterministic random streams.
//!
//! Every test unit gets a seed derived from the global seed and its ID, and
//! permutation `b` of that unit draws from ChaCha stream `b`. A permutation
//! therefore never depends on scan order, worker count, or on how many other
//! permutations were drawn before it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seed for one test unit.
pub fn unit_seed(global: u64, unit_id: &str) -> u64 {
    splitmix64(global ^ splitmix64(fnv1a(unit_id.as_bytes())))
}

/// Seed for replicate `rep` of experiment cell `cell`.
pub fn replicate_seed(master: u64, cell: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(cell.wrapping_add(1))) ^ rep)
}

/// ChaCha8 generator on stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fisher-Yates shuffle of `0..n` for permutation number `b` of a unit.
pub fn permutation(seed: u64, b: u64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    fill_permutation(seed, b, &mut idx);
    idx
}

/// As [`permutation`], reusing `idx` (its length is `n`).
pub fn fill_permutation(seed: u64, b: u64, idx: &mut [usize]) {
    for (i, v) in idx.iter_mut().enumerate() {
        *v = i;
    }
    idx.shuffle(&mut stream(seed, b));
}
