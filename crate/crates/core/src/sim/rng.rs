use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one replicate of one simulation cell.
///
/// The key is derived from `(seed, cell)` and the replicate selects the
/// ChaCha stream, so no two replicates share random numbers and the result
/// does not depend on which thread runs them.
pub fn replicate_rng(seed: u64, cell: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(cell)));
    rng.set_stream(replicate);
    rng
}
