use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for one path, so results do not depend on how paths
/// are split across threads.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}
