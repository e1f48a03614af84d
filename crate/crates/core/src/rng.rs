//! Counter-based, splittable random streams.
//!
//! A draw is identified by `(seed, stream_id)` and its position in the stream,
//! never by the thread that produced it. Parallel work is cut into fixed-size
//! shards; shard `i` always reads stream `i`, so results are independent of the
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draws per shard for sharded Monte Carlo.
pub const SHARD_LEN: usize = 1 << 14;

/// The generator for one stream.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Mixes a purpose tag into a seed so unrelated computations sharing a user
/// seed read disjoint streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(shard_id, len)` pairs covering `n` draws.
pub fn shards(n: usize) -> Vec<(u64, usize)> {
    let full = n / SHARD_LEN;
    let mut out: Vec<(u64, usize)> = (0..full).map(|i| (i as u64, SHARD_LEN)).collect();
    let rest = n - full * SHARD_LEN;
    if rest > 0 {
        out.push((full as u64, rest));
    }
    out
}
